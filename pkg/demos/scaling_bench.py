"""Count multiply-accumulates per training step as the graph grows."""
from graphsparse import bench

recs = bench.sweep(["gsnet", "dense_gcn"], [128, 256, 512, 1024], d=8, timing=False)
for r in recs:
    print(f"{r.model:9s} N={r.N:5d} MACs={r.step_flops:>13,d} NxN activation={r.square_activation}")
for tag, s in bench.summarize(recs).items():
    print(tag, "FLOP exponent", round(s["step_flops_exponent"], 3))
