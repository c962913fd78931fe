#!/usr/bin/env python3
"""Secondary sum-rate versus per-subcarrier transmit SNR for the three
schemes (adaptive, fixed-mode, non-cooperative).

Usage: python scripts/run_snr_sweep.py [OUT_DIR] [REALIZATIONS]
"""

import sys

from crnalloc.harness import ExperimentConfig, emit_plot_data, run_experiment


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "results/snr_sweep"
    realizations = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    config = ExperimentConfig(
        sweep_var="snr_db",
        sweep_values=(0, 2, 4, 6, 8, 10, 12, 14),
        realizations=realizations,
    )
    csv_path = run_experiment(config, out_dir)
    print(f"wrote {csv_path}")
    for path in emit_plot_data(csv_path, out_dir):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
