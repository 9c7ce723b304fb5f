"""Allow running as python -m sched_leak_harness."""

from .cli import main

if __name__ == "__main__":
    main()
