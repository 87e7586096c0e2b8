"""Source emitters that turn a kernel document into a target-DSL program.

These are text generators only. Compiling and running the result is the
job of an adapter script wrapped by ``SubprocessBackend``.
"""

from __future__ import annotations

from einfuzz.ir import EinsumKernel, Format, TensorTerm, from_json

DIALECTS = ("taco-cpp", "finch-julia")


class UnsupportedConstruct(ValueError):
    pass


def emit_source(document: dict, dialect: str) -> str:
    kernel, inputs = from_json(document)
    if dialect == "taco-cpp":
        return _taco(kernel, inputs)
    if dialect == "finch-julia":
        return _finch(kernel, inputs)
    raise UnsupportedConstruct(f"unknown dialect {dialect!r}; expected one of {', '.join(DIALECTS)}")


def _taco_format(term: TensorTerm) -> str:
    if term.rank == 0:
        if term.format is not Format.DENSE:
            raise UnsupportedConstruct(f"{term.name}: scalar tensors must be dense")
        return "Format()"
    if term.format is Format.DENSE:
        return "Format({" + ", ".join(["Dense"] * term.rank) + "})"
    if term.format is Format.COO:
        return f"COO({term.rank})"
    if term.rank != 2:
        raise UnsupportedConstruct(f"{term.name}: {term.format.value} needs a rank-2 tensor")
    return "CSR" if term.format is Format.CSR else "CSC"


def _fmt_value(v, dtype: str) -> str:
    return repr(float(v)) if dtype == "float" else str(v)


def _taco(kernel: EinsumKernel, inputs) -> str:
    ctype = "double" if kernel.dtype == "float" else "int"
    lines = [
        '#include "taco.h"',
        "#include <iostream>",
        "#include <map>",
        "#include <vector>",
        "",
        "using namespace taco;",
        "",
        "int main() {",
    ]
    for term in kernel.inputs:
        dims = ", ".join(str(n) for n in kernel.shape_of(term))
        lines.append(f'  Tensor<{ctype}> {term.name}("{term.name}", {{{dims}}}, {_taco_format(term)});')
        data = inputs[term.name]
        for c, v in zip(data.coords, data.values):
            lines.append(f"  {term.name}.insert({{{', '.join(map(str, c))}}}, ({ctype}){_fmt_value(v, kernel.dtype)});")
        lines.append(f"  {term.name}.pack();")
    out = kernel.output
    if out.rank == 0:
        _taco_format(out)
        lines.append(f'  Tensor<{ctype}> {out.name}("{out.name}");')
    else:
        dims = ", ".join(str(n) for n in kernel.shape_of(out))
        lines.append(f'  Tensor<{ctype}> {out.name}("{out.name}", {{{dims}}}, {_taco_format(out)});')
    indices = sorted(kernel.dims)
    lines.append("  IndexVar " + ", ".join(f'{i}("{i}")' for i in indices) + ";")
    lhs = f"{out.name}({', '.join(out.indices)})"
    rhs = " * ".join(f"{t.name}({', '.join(t.indices)})" for t in kernel.inputs)
    lines += [
        f"  {lhs} = {rhs};",
        f"  {out.name}.compile();",
        f"  {out.name}.assemble();",
        f"  {out.name}.compute();",
        # storage order is format-specific; a std::map sorts coordinates row-major
        f"  std::map<std::vector<int>, {ctype}> sorted;",
        f"  for (auto& entry : iterate<{ctype}>({out.name})) {{",
        "    if (entry.second != 0) {",
        f"      std::vector<int> c(entry.first.begin(), entry.first.begin() + {out.rank});",
        "      sorted[c] = entry.second;",
        "    }",
        "  }",
        "  for (auto& entry : sorted) {",
        '    std::cout << "[";',
        "    for (size_t d = 0; d < entry.first.size(); d++) {",
        '      std::cout << (d ? "," : "") << entry.first[d];',
        "    }",
        '    std::cout << "] " << entry.second << "\\n";',
        "  }",
        "  return 0;",
        "}",
    ]
    return "\n".join(lines) + "\n"


def _finch_level(term: TensorTerm, zero: str) -> str:
    if term.format is Format.DENSE:
        level = f"Element({zero})"
        for _ in range(term.rank):
            level = f"Dense({level})"
        return level
    if term.format is Format.COO:
        return f"SparseCOO{{{term.rank}}}(Element({zero}))"
    if term.rank != 2:
        raise UnsupportedConstruct(f"{term.name}: {term.format.value} needs a rank-2 tensor")
    return f"Dense(SparseList(Element({zero})))"


def _finch(kernel: EinsumKernel, inputs) -> str:
    jtype = "Float64" if kernel.dtype == "float" else "Int64"
    zero = "0.0" if kernel.dtype == "float" else "0"
    lines = ["using Finch", ""]
    for term in kernel.inputs:
        shape = kernel.shape_of(term)
        lines.append(f"{term.name}_raw = zeros({', '.join([jtype, *map(str, shape)])})")
        data = inputs[term.name]
        for c, v in zip(data.coords, data.values):
            lines.append(f"{term.name}_raw[{', '.join(str(x + 1) for x in c)}] = {_fmt_value(v, kernel.dtype)}")
        level = _finch_level(term, zero)
        if term.format is Format.CSR:
            # Finch levels are column-major; store the transpose and swizzle back
            lines.append(f"{term.name} = swizzle(Tensor({level}, permutedims({term.name}_raw)), 2, 1)")
        else:
            lines.append(f"{term.name} = Tensor({level}, {term.name}_raw)")
    out = kernel.output
    lhs = f"{out.name}[{', '.join(out.indices)}]"
    rhs = " * ".join(f"{t.name}[{', '.join(t.indices)}]" for t in kernel.inputs)
    lines.append(f"@einsum {lhs} += {rhs}")
    if out.rank == 0:
        _finch_level(out, zero)
        lines += [
            f"v = {out.name}[]",
            'v != 0 && println("[] ", v)',
        ]
    else:
        level = _finch_level(out, zero)
        lines += [
            f"{out.name} = Tensor({level}, {out.name})",
            f"for idx in sort(vec(collect(CartesianIndices(size({out.name})))), by = c -> Tuple(c))",
            f"    v = {out.name}[idx]",
            '    v != 0 && println("[", join(Tuple(idx) .- 1, ","), "] ", v)',
            "end",
        ]
    return "\n".join(lines) + "\n"
