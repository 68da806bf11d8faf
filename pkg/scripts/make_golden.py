"""Regenerate the frozen regression files under tests/data.

Only rerun this after a deliberate change to the model, the noise stream or
the file formats; the tests compare against these bytes.
"""

import argparse
import json
from pathlib import Path

from textile_resonance.designio import save_design, shirt_design
from textile_resonance.estimator import estimate
from textile_resonance.simulator import NoiseModel, rng_stream, synthesize_spectrum
from textile_resonance.spectrum import SIMULATION_GRID, write_csv, write_touchstone

GOLDEN_SEED = 2024


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "tests" / "data", type=Path)
    args = ap.parse_args(argv)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    doc = shirt_design()
    save_design(doc, out / "shirt.json")
    spec = synthesize_spectrum(doc.interface(), SIMULATION_GRID, NoiseModel(), rng_stream(GOLDEN_SEED))
    write_touchstone(spec, out / "shirt_noisy.s1p")
    write_csv(spec, out / "shirt_noisy.csv")
    result = estimate(spec, doc.known())
    (out / "shirt_noisy_estimate.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    for p in sorted(out.iterdir()):
        print(p)


if __name__ == "__main__":
    main()
