"""Factor a low-rank matrix through its own rows and columns, then show the
core is not unique."""
import numpy as np

from graphsparse import analysis

rng = np.random.default_rng(1)
M = rng.normal(size=(8, 2)) @ rng.normal(size=(2, 8))
f = analysis.rank_factorize(M, 2)
print("numerical rank", analysis.numerical_rank(M))
print("reconstruction residual", f.residual(M))
print("K =\n", f.K)

g = analysis.conjugate_factorization(f, np.array([[2.0, 1.0], [0.0, 1.0]]))
print("conjugated K =\n", g.K)
print("still reconstructs M:", g.residual(M))

print(analysis.theorem_study(n=20, rank=4, trials=20))
