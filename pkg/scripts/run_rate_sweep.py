#!/usr/bin/env python3
"""Secondary sum-rate versus primary rate requirement at fixed SNR.

Usage: python scripts/run_rate_sweep.py [OUT_DIR] [REALIZATIONS]
"""

import sys

from crnalloc.harness import ExperimentConfig, emit_plot_data, run_experiment


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "results/rate_sweep"
    realizations = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    config = ExperimentConfig(
        sweep_var="rate_req",
        sweep_values=(1, 2, 3, 4, 5, 6, 7, 8, 9),
        snr_db=10.0,
        realizations=realizations,
    )
    csv_path = run_experiment(config, out_dir)
    print(f"wrote {csv_path}")
    for path in emit_plot_data(csv_path, out_dir):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
