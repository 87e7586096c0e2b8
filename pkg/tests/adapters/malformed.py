import sys

sys.stdin.read()
print(sys.argv[1] if len(sys.argv) > 1 else "this is not json")
