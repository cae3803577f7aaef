"""
Energy on Xylo-scale hardware
=============================

Synaptic-operation counts, the lower bound from the cost of one add, the
chip-count upper bound and the balanced estimate for whole spectrograms.
"""

from spikeflag.energy import (
    PUBLISHED_XYLO_ESTIMATES,
    flops_layers,
    flops_snn,
    format_table,
    published_discrepancies,
    spectrogram_report,
    upper_bound_power,
)
from spikeflag.snn import build_from_config, xylo_check

# which networks fit on one chip
for key in [("patched", "full"), ("xylo", "full"), ("xylo", "dop")]:
    net = build_from_config(*key)
    print(key, net.architecture, xylo_check(net) or "fits")

# synaptic operations for a 4-512-4 net with illustrative rates, 4 steps
layers = flops_layers((4, 512, 4), [0.25, 0.05])
ops = flops_snn(layers, steps=4)
print("FLOPs per patch", ops)

# exact chip arithmetic
print("upper bound full", upper_bound_power(512, 4, "full"), "W")
print("upper bound DoP ", upper_bound_power(512, 1, "dop"), "W")

reports = {
    "xylo full": spectrogram_report(ops, "full"),
    "xylo DoP": spectrogram_report(ops, "dop"),
    "xylo DoP (1 chip idle)": spectrogram_report(ops, "dop", balanced_mode="single-chip"),
}
print(format_table(reports))

# published figures next to what the formulas give
print(PUBLISHED_XYLO_ESTIMATES["full"])
for mode, rows in published_discrepancies().items():
    for name, (ours, published) in rows.items():
        print("%-5s %-24s ours %.4g  published %.4g" % (mode, name, ours, published))
