"""affuse-extract: run an extraction job described by a JSON file.

Exit codes: 0 all videos extracted, 1 some videos failed (pack still
written for the successful ones), 2 I/O failure, 3 malformed job file.
"""

from __future__ import annotations

import argparse
import sys

from .jobs import ExtractorJob, JobError, run_job


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="affuse-extract",
        description="Run encoders over raw media and emit an affuse feature pack.",
    )
    parser.add_argument("-c", "--config", required=True, help="job JSON file")
    args = parser.parse_args(argv)

    try:
        job = ExtractorJob.from_file(args.config)
    except (JobError, FileNotFoundError) as exc:
        print(f"job error: {exc}", file=sys.stderr)
        return 3
    try:
        report = run_job(job)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(f"pack: {report['pack']}")
    print(f"extracted {len(report['videos_ok'])} video(s): {report['modalities']}")
    for failure in report["failures"]:
        print(
            f"failed: {failure['video']} [{failure['modality']}]: {failure['reason']}",
            file=sys.stderr,
        )
    return 1 if report["failures"] else 0


if __name__ == "__main__":
    sys.exit(main())
