"""Cross-check the assembled 1d energy with an independent brute-force quadrature
and the energy differences with the s-perimeter of the subgraph."""
import numpy as np

from nlmg.assembly import get_assembler
from nlmg.femspace import DatumSpec, exterior_clement
from nlmg.mesh import generate_interval_mesh
from nlmg.oracle import BruteForceConfig, brute_force_energy_1d, brute_force_perimeter_1d

mesh = generate_interval_mesh(-1.0, 1.0, 2.0, 8)
g = DatumSpec.constants([(1.0, 1.5, 0.5)])
base = exterior_clement(g, mesh)
rng = np.random.default_rng(0)
u, v = (base.with_interior(rng.uniform(-1, 1, mesh.interior_nodes.size)) for _ in range(2))
fast = BruteForceConfig(grid_n=6, levels=8, t_points=16)
for s in (0.1, 0.25, 0.4):
    asm = get_assembler(mesh, s)
    Ea, Eb = asm.energy(u), brute_force_energy_1d(u, None, s)
    dP = (brute_force_perimeter_1d(u, None, s=s, config=fast, kinks=mesh.vertices[:, 0])
          - brute_force_perimeter_1d(v, None, s=s, config=fast, kinks=mesh.vertices[:, 0]))
    dE = Ea - asm.energy(v)
    print(f"s = {s}: energy {Ea:.10f} vs brute force {Eb:.10f} (rel {abs(Ea - Eb) / Eb:.1e}); "
          f"perimeter difference {dP:.8f} vs energy difference {dE:.8f}")
