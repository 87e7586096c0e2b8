#include "taco.h"
#include <iostream>
#include <map>
#include <vector>

using namespace taco;

int main() {
  Tensor<int> B("B", {3, 3}, CSR);
  B.insert({0, 1}, (int)4);
  B.insert({1, 0}, (int)2);
  B.insert({1, 1}, (int)8);
  B.insert({2, 0}, (int)1);
  B.pack();
  Tensor<int> C("C", {3}, Format({Dense}));
  C.insert({1}, (int)2);
  C.insert({2}, (int)5);
  C.pack();
  Tensor<int> A("A", {3}, Format({Dense}));
  IndexVar i("i"), j("j");
  A(j) = B(i, j) * C(i);
  A.compile();
  A.assemble();
  A.compute();
  std::map<std::vector<int>, int> sorted;
  for (auto& entry : iterate<int>(A)) {
    if (entry.second != 0) {
      std::vector<int> c(entry.first.begin(), entry.first.begin() + 1);
      sorted[c] = entry.second;
    }
  }
  for (auto& entry : sorted) {
    std::cout << "[";
    for (size_t d = 0; d < entry.first.size(); d++) {
      std::cout << (d ? "," : "") << entry.first[d];
    }
    std::cout << "] " << entry.second << "\n";
  }
  return 0;
}
