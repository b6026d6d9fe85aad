"""
Band structure of a static lattice
==================================

Diagonalize the lattice Hamiltonian at zero quasimomentum, look at the
parity pattern, and see how the conduction bands pair up into qubits.

Run with ``python demos/01_band_structure.py``.
"""

# %%
import numpy as np

from latticegates import LatticeModel, bloch_basis, pair_splittings, qubit_subspace
from latticegates.lattice import momentum_pair_states

model = LatticeModel(depth=10.0, n_max=10)
basis = bloch_basis(model)
print(model)

# %%
# Energies and parities of the lowest bands.  Above the barrier the bands
# come in nearly degenerate even/odd pairs.
for nu in range(9):
    print(f"nu={nu}  E={basis.energies[nu]:9.4f}  parity={basis.parities[nu]}")

# %%
# Pair splittings against the gap that isolates the lowest conduction pair.
for key, value in pair_splittings(basis).items():
    print(f"{key:>8s}: {value:.4g}")

# %%
# The pair (|4>, |3>) forms the qubit used by most gates.  Its sum and
# difference are close to plane waves with momentum +-4 hbar k_L.
sub = qubit_subspace(basis, 4)
print("qubit bands (|0>_L, |1>_L):", sub.bands)
plus, minus = momentum_pair_states(basis, 4)
n = model.momenta
for name, state in (("plus", plus), ("minus", minus)):
    top = np.argsort(np.abs(state) ** 2)[::-1][:2]
    print(name, {int(2 * n[k]): round(float(abs(state[k]) ** 2), 4) for k in top})

# %%
# A free particle is the limit of zero depth: E = (2n)^2 doublets.
free = bloch_basis(LatticeModel(0.0, 10))
print("V0 = 0:", np.round(free.energies[:7], 6))
