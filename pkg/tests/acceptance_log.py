"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    RESULTS[criterion] = line
    print(line)
    return passed


def summary_lines():
    def key(c):
        num = "".join(ch for ch in c if ch.isdigit())
        return int(num), c
    return [RESULTS[c] for c in sorted(RESULTS, key=key)]
