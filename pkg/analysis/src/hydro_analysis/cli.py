"""`hydro-plots`: build figures from a hydrochain output directory.

    hydro-plots --input-dir out/profiles [--figures profiles work ...]
                [--format png] [--output-dir figs]

Without --figures, the kinds are inferred from the manifest's study field.
Exit codes: 0 on success (an empty figure list is a success producing no
files), 2 on schema drift or missing/invalid inputs.
"""

from __future__ import annotations

import argparse
import sys

from .figures import run_job
from .jobs import FIGURE_KINDS, FORMATS, PlotJob, SchemaError

_STUDY_FIGURES = {
    "converge_profiles": ["profiles"],
    "converge_work": ["work"],
    "equipartition": ["equipartition"],
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hydro-plots", description=__doc__)
    parser.add_argument("--input-dir", required=True)
    parser.add_argument("--figures", nargs="*", choices=FIGURE_KINDS,
                        default=None)
    parser.add_argument("--format", choices=FORMATS, default="png")
    parser.add_argument("--output-dir", default=None)
    args = parser.parse_args(argv)

    try:
        job = PlotJob(input_dir=args.input_dir, figures=args.figures or [],
                      format=args.format, output_dir=args.output_dir)
        if args.figures is None:
            study = job.manifest().get("study")
            job.figures = _STUDY_FIGURES.get(study, [])
        produced = run_job(job)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
