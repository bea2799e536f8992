import sys

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")


def record(key, checks, info=""):
    """Store one pass/fail line for a criterion and echo it to stdout."""
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    detail = ("all checks ok" if ok else "failed: " + ", ".join(failed)) + (f" | {info}" if info else "")
    ACCEPTANCE[key] = (ok, detail)
    print(f"{key} {'PASS' if ok else 'FAIL'}  {detail}", file=sys.stderr)
    return ok, failed
