"""One standalone entry point per plot kind.

    plotkit-surface     surface.csv out.png
    plotkit-tradeoff    stage1_log.jsonl out.png [--cost-key mult_adds_total]
    plotkit-losscurve   supernet_log.jsonl out.png
    plotkit-rankscatter rankcorr.json out.png [--run-index 1]

Exit 0 on success; schema mismatches exit 2 with the offending columns.
"""

import argparse
import sys

from .render import PlotJob, SchemaError, render


def _main(kind, argv, extra=None):
    parser = argparse.ArgumentParser(prog=f"plotkit-{kind}")
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("--title")
    parser.add_argument("--dpi", type=int)
    for name, kwargs in (extra or {}).items():
        parser.add_argument(name, **kwargs)
    args = parser.parse_args(argv)

    style = {}
    if args.title:
        style["title"] = args.title
    if args.dpi:
        style["dpi"] = args.dpi
    if getattr(args, "cost_key", None):
        style["cost_key"] = args.cost_key
    if getattr(args, "run_index", None) is not None:
        style["run_index"] = args.run_index

    try:
        result = render(PlotJob(args.input, kind, args.output, style))
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {result['output']}")
    if "annotation" in result:
        print(result["annotation"])
    return 0


def surface_main(argv=None):
    return _main("surface", argv)


def tradeoff_main(argv=None):
    return _main("tradeoff", argv,
                 extra={"--cost-key": {"default": "params_total"}})


def losscurve_main(argv=None):
    return _main("losscurve", argv)


def rankscatter_main(argv=None):
    return _main("rankscatter", argv,
                 extra={"--run-index": {"type": int, "default": 0}})


if __name__ == "__main__":
    sys.exit(_main(sys.argv[1], sys.argv[2:]))
