"""Regenerate data/glass_synth.csv from the packaged generator.

The file is a deterministic 214x10 five-class classification benchmark in
the toolkit's clean-CSV format (feature columns + one label column). Rerun
after changing plcoop.synth.glass_like; the output is byte-stable.
"""

from pathlib import Path

from plcoop.synth import glass_like

OUT = Path(__file__).resolve().parent.parent / "data" / "glass_synth.csv"


def main() -> None:
    ds = glass_like(seed=7)
    lines = [",".join([*(f"attr{j}" for j in range(ds.num_features)), "glass_type"])]
    for row, label in zip(ds.features, ds.true_labels):
        cells = [repr(float(v)) for v in row]
        cells.append(ds.label_names[int(label)])
        lines.append(",".join(cells))
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")
    print(f"wrote {OUT} ({ds.num_instances} rows)")


if __name__ == "__main__":
    main()
