import contextlib


@contextlib.contextmanager
def criterion(number: int, name: str):
    """Print one pass/fail line per acceptance criterion."""
    try:
        yield
    except BaseException:
        print(f"[criterion {number:02d}] {name}: FAIL")
        raise
    else:
        print(f"[criterion {number:02d}] {name}: PASS")
