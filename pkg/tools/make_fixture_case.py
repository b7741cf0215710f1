#!/usr/bin/env python3
"""Write the constructed demonstration case to a directory.

    python3 tools/make_fixture_case.py /tmp/demo-case
    uavforensics ingest /tmp/demo-case
    uavforensics report /tmp/demo-case
"""

import argparse
import sys

from uavforensics.synthetic import write_case


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("case_dir")
    ap.add_argument("--no-media", action="store_true", help="leave out the camera images")
    args = ap.parse_args(argv)
    case = write_case(args.case_dir, with_media=not args.no_media)
    print(f"wrote {case}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
