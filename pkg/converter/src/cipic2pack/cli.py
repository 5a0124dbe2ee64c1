"""cipic2pack command line: convert --input <dir> --output <dir>."""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cipic2pack",
        description="Convert the CIPIC MATLAB HRTF release to the portable layout.",
    )
    parser.add_argument("--input", required=True, help="CIPIC release root")
    parser.add_argument("--output", required=True, help="portable dataset directory")
    parser.add_argument("--training-subjects", default=None,
                        help="file with one training subject id per line")
    parser.add_argument("--generic-subject", default="021",
                        help="mannequin id used by the generic method")
    args = parser.parse_args(argv)

    training = None
    if args.training_subjects:
        with open(args.training_subjects) as fh:
            training = [line.strip() for line in fh if line.strip()]
    try:
        report = convert(args.input, args.output, training_subjects=training,
                         generic_subject=args.generic_subject)
    except (ConversionError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
