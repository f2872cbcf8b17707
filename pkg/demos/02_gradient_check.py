"""Finite-difference check of every op and loss, in both precisions."""
from liam.gradcheck import run_suite


def main():
    rows = run_suite(seeds=range(3))
    for r in sorted(rows, key=lambda r: (r["dtype"], -r["max_rel_error"]))[:8]:
        print(f"{r['check']:<18} {r['dtype']:<8} {r['max_rel_error']:.2e}  (tol {r['tolerance']:.0e})")
    print("all within tolerance:", all(r["passed"] for r in rows))


if __name__ == "__main__":
    main()
