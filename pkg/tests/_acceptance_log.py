"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(label: str, passed: bool, detail: str) -> None:
    LINES.append(f"{'PASS' if passed else 'FAIL'}  [{label}] {detail}")
