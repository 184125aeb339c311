"""
Writes one AND-OR evaluation model per parameter row to models/andor_row<N>.poc.

Each model is labelled so that `mc --dra models/eventually_or1.dra` asks for the probability
that the evaluation finishes with value 1.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from pocan.model import AND_OR_STATES, Valuation, and_or_model, render_poc

# (z, y, x_a, x_o)
ROWS = [
    ("1/2", "2/5", "1/5", "1/5"),
    ("1/2", "2/5", "1/5", "2/5"),
    ("1/2", "2/5", "1/5", "3/5"),
    ("1/2", "2/5", "1/5", "4/5"),
    ("1/2", "1/2", "1/10", "1/10"),
    ("1/2", "1/2", "1/5", "1/10"),
    ("1/2", "1/2", "3/10", "1/10"),
    ("1/2", "1/2", "2/5", "1/10"),
    ("1/5", "2/5", "1/5", "1/5"),
    ("3/10", "2/5", "1/5", "1/5"),
    ("2/5", "2/5", "1/5", "1/5"),
]


def finished_with_one() -> Valuation:
    zero = {s: ('a' if s == 'or_ret1' else 'b') for s in AND_OR_STATES}
    return Valuation(zero, {s: 'b' for s in AND_OR_STATES})


def create_andor_models(output_dir: Path):
    output_dir.mkdir(parents=True, exist_ok=True)
    for i, (z, y, x_a, x_o) in enumerate(ROWS, start=1):
        m = replace(and_or_model(z, y, x_a, x_o), labels=finished_with_one())
        path = output_dir / f"andor_row{i}.poc"
        header, _, body = render_poc(m).partition("\n")
        comment = f"# AND-OR evaluation with z={z}, y={y}, x_a={x_a}, x_o={x_o}"
        path.write_text(f"{header}\n{comment}\n{body}", encoding='utf-8')
        print(f"Wrote {path}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Generate the AND-OR evaluation models")
    parser.add_argument("--output-dir", type=Path, default=Path("models"))
    args = parser.parse_args()
    create_andor_models(args.output_dir)
    print("\n✅ Model generation complete.")
