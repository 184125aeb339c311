import argparse
import json
from pathlib import Path
import sys
from typing import List, Optional, Tuple

from natsort import natsorted
import yaml

from pocan.analysis.base_analyzer import AnalysisContext, BaseAnalyzer
from pocan.analysis.bounds_analyzer import BoundsAnalyzer
from pocan.analysis.chain_analyzer import ChainAnalyzer
from pocan.analysis.omega_analyzer import DivergenceAnalyzer, ModelCheckAnalyzer
from pocan.analysis.simulation_analyzer import SimulationAnalyzer
from pocan.analysis.termination_analyzer import ExpTimeAnalyzer, FinitenessAnalyzer, TerminationAnalyzer
from pocan.config_loader import load_defaults
from pocan.errors import ModelValidationError, PocanError
from pocan.exptime import Mode
from pocan.model import IDENT_RE, Config, Dra, Poc, parse_dra, parse_poc
from pocan.reporter import Reporter, to_jsonable
from pocan.utils import content_hash, create_output_directory

USAGE_EXIT = 1
VALIDATION_EXIT = 2
MODEL_SUFFIXES = ('.poc', '.dra')


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"Error: {message}\n")


def get_analyzer(command: str, args: argparse.Namespace) -> BaseAnalyzer:
    """Factory function to return the analyzer instance for a command."""
    if command == 'analyze':
        return ChainAnalyzer()
    elif command == 'term':
        return TerminationAnalyzer()
    elif command == 'classify':
        return FinitenessAnalyzer()
    elif command == 'exptime':
        return ExpTimeAnalyzer()
    elif command == 'diverge':
        return DivergenceAnalyzer()
    elif command == 'mc':
        return ModelCheckAnalyzer()
    elif command == 'simulate':
        estimate = args.estimate or ('accept' if args.dra else 'term')
        return SimulationAnalyzer(estimate)
    elif command == 'bounds':
        return BoundsAnalyzer()
    raise ValueError(f"Unknown command '{command}'")


def parse_start(text: str) -> Config:
    """Parses `state` or `state:counter`; the counter defaults to 1."""
    state, sep, counter = text.partition(':')
    if not IDENT_RE.match(state):
        raise argparse.ArgumentTypeError(f"invalid state name '{state}'")
    if not sep:
        return Config(state, 1)
    try:
        value = int(counter)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid counter '{counter}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"counter must be non-negative, got {value}")
    return Config(state, value)


def parse_pairs(text: str) -> List[Tuple[str, str]]:
    """Parses `p:q[,p:q...]`."""
    pairs = []
    for item in text.split(','):
        p, sep, q = item.strip().partition(':')
        if not sep or not IDENT_RE.match(p) or not IDENT_RE.match(q):
            raise argparse.ArgumentTypeError(f"invalid pair '{item}', expected p:q")
        pairs.append((p, q))
    return pairs


def read_text(path: Path) -> str:
    if not path.is_file():
        raise ModelValidationError(f"Input file not found: {path}")
    return path.read_text(encoding='utf-8')


def load_model(path: Path) -> Tuple[Poc, str]:
    text = read_text(path)
    try:
        return parse_poc(text), text
    except PocanError as e:
        raise _with_path(e, path)


def _with_path(error: PocanError, path: Path) -> PocanError:
    error.args = (f"{path}: {error}",)
    return error


def load_dra(path: Path) -> Dra:
    try:
        return parse_dra(read_text(path))
    except PocanError as e:
        raise _with_path(e, path)


def get_model_files(source_path: Path) -> List[Path]:
    """Gets the .poc/.dra files at a path, in natural order for a directory."""
    if not source_path.exists():
        raise ModelValidationError(f"Model source not found: {source_path}")
    if source_path.is_dir():
        files = natsorted((f for f in source_path.iterdir() if f.suffix in MODEL_SUFFIXES), key=lambda f: f.name)
        if not files:
            raise ModelValidationError(f"No .poc or .dra files found in the directory: {source_path}")
        return files
    return [source_path]


def run_validate(args: argparse.Namespace, status) -> int:
    files = get_model_files(args.path)
    rows = []
    for path in files:
        try:
            if path.suffix == '.dra':
                d = load_dra(path)
                summary = f"{len(d.dra_states)} states, {len(d.alphabet)} letters, {len(d.pairs)} pairs"
            else:
                m, _ = load_model(path)
                summary = f"{m.n_states} states, {len(m.zero_rules) + len(m.pos_rules)} rules"
            rows.append({"path": str(path), "ok": True, "error": None})
            print(f"OK: {path} ({summary})", file=status)
        except PocanError as e:
            rows.append({"path": str(path), "ok": False, "error": str(e)})
            print(f"Error: {e}", file=sys.stderr)
    if args.json:
        print(json.dumps(to_jsonable({"command": "validate", "results": {"files": rows}}), indent=2))
    return 0 if all(r["ok"] for r in rows) else VALIDATION_EXIT


def run_analysis(args: argparse.Namespace, settings: dict, status) -> int:
    """Runs one model command and reports its result."""
    model, text = load_model(args.model)
    dra = load_dra(args.dra) if getattr(args, 'dra', None) else None
    context = AnalysisContext(
        model=model,
        model_path=args.model,
        settings=settings,
        overrides={k: getattr(args, k, None) for k in ('rel_err', 'abs_err', 'mode', 'samples', 'horizon', 'seed', 'window')},
        start=getattr(args, 'start', None),
        target=getattr(args, 'target', None),
        pairs=getattr(args, 'pairs', None),
        dra=dra,
    )
    analyzer = get_analyzer(args.command, args)
    result = analyzer.analyze(context)

    reporter = Reporter()
    reporter.add_analysis_result(args.command, {"path": str(args.model), "sha256": content_hash(text)}, result)
    timing = dict(context.timer.phases) if args.timing else None
    if args.json:
        print(reporter.to_json(args.command, timing))
    else:
        reporter.print_console_report()

    if args.report_dir is not None:
        output_dir = create_output_directory(args.report_dir)
        reporter.output_dir = output_dir
        print(f"Output directory: {output_dir}", file=status)
        md_path = reporter.write_markdown_report()
        print(f"Markdown report saved to: {md_path}", file=status)
    if timing is not None and not args.json:
        for name, seconds in timing.items():
            print(f"  {name}: {seconds:.3f} s", file=status)
    print("\n✅ Analysis complete.", file=status)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--json", action="store_true", help="Print the machine-readable report on stdout.")
    common.add_argument("--report-dir", type=Path, help="Write result.md and CSV tables under a timestamped directory here.")
    common.add_argument("--timing", action="store_true", help="Report wall-clock seconds per phase.")
    common.add_argument("--config", type=Path, help="YAML file overriding the packaged defaults.")

    precision = CliParser(add_help=False)
    precision.add_argument("--rel-err", type=float, help="Relative error for probabilities (default 1e-6).")
    precision.add_argument("--abs-err", type=float, help="Absolute error for expected times (default 1e-3).")
    precision.add_argument("--mode", choices=[m.value for m in Mode], help="Error budgeting mode (default adaptive).")

    model = CliParser(add_help=False)
    model.add_argument("model", type=Path, help="Path to a .poc model file.")

    parser = CliParser(prog="pocan", description="Analysis of probabilistic one-counter automata")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    validate = sub.add_parser("validate", parents=[common], help="Check .poc/.dra files or a directory of them.")
    validate.add_argument("path", type=Path)
    sub.add_parser("analyze", parents=[model, common], help="Underlying chain, SCCs, trends and potentials.")
    for name, help_text in (("term", "Termination probabilities [p↓q]."),
                            ("classify", "Finiteness of the expected termination times."),
                            ("exptime", "Conditional expected termination times E(p↓q).")):
        cmd = sub.add_parser(name, parents=[model, common, precision], help=help_text)
        cmd.add_argument("--pairs", type=parse_pairs, help="Restrict the report to p:q[,p:q...].")
    diverge = sub.add_parser("diverge", parents=[model, common, precision], help="Non-termination probability [p↑].")
    diverge.add_argument("--from", dest="start", type=parse_start, required=True, metavar="STATE")
    mc = sub.add_parser("mc", parents=[model, common, precision], help="Probability of acceptance by a DRA.")
    mc.add_argument("--dra", type=Path, required=True, help="Path to a .dra file.")
    mc.add_argument("--from", dest="start", type=parse_start, required=True, metavar="STATE[:COUNTER]")
    simulate = sub.add_parser("simulate", parents=[model, common], help="Monte-Carlo estimates.")
    simulate.add_argument("--from", dest="start", type=parse_start, required=True, metavar="STATE[:COUNTER]")
    simulate.add_argument("--to", dest="target", help="Target state for 'term' and 'exptime' estimates.")
    simulate.add_argument("--dra", type=Path, help="Path to a .dra file for acceptance estimates.")
    simulate.add_argument("--estimate", choices=["term", "exptime", "accept"])
    simulate.add_argument("--samples", type=int)
    simulate.add_argument("--horizon", type=int)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--window", type=int)
    sub.add_parser("bounds", parents=[model, common], help="Closed-form bounds instantiated for the model.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point that handles command-line arguments and runs the command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    status = sys.stderr if args.json else sys.stdout
    try:
        settings = load_defaults(args.config)
    except (FileNotFoundError, ValueError, yaml.YAMLError) as e:
        print(f"Failed to load configuration file: {e}", file=sys.stderr)
        return USAGE_EXIT
    try:
        if args.command == 'validate':
            return run_validate(args, status)
        return run_analysis(args, settings, status)
    except PocanError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
