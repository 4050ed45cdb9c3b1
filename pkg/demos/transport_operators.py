"""Matrix-free transport operators against their assembled dense form.

Builds a small two-group problem with a fissile block in a reflector,
applies the loss and fission operators without assembling them, and checks
the result against dense matrices built element by element.  The last part
shows that a homogeneous medium with reflective sides keeps a flat flux.
"""
import numpy as np

from nks_transport import (
    CrossSectionLibrary,
    Material,
    Region,
    TransportProblem,
    build_mesh,
    build_quadrature,
)
from nks_transport.oracle import dense_operators

reflector = Material([0.8, 1.6], [[0.55, 0.2], [0.0, 1.5]], [0.0, 0.0], [0.0, 0.0])
fuel = Material([0.9, 1.8], [[0.5, 0.25], [0.0, 1.3]], [0.03, 0.9], [1.0, 0.0])
xs = CrossSectionLibrary({0: reflector, 1: fuel})

mesh = build_mesh(4, 4, material=0, regions=[Region(1, 1, 3, 1, 3)],
                  boundary={"left": "reflective", "bottom": "reflective"})
problem = TransportProblem(mesh, xs, build_quadrature(8))
print(f"{mesh.n_nodes} nodes, {problem.n_groups} groups, {problem.quad.n_dirs} directions, "
      f"{problem.size} unknowns")

# %% matrix-free products agree with the dense operators to roundoff
A, B = dense_operators(problem)
x = np.random.default_rng(0).standard_normal(problem.size)
for name, fast, dense in (("A", problem.apply_A(x), A @ x), ("B", problem.apply_B(x), B @ x)):
    err = np.linalg.norm(fast - dense) / np.linalg.norm(dense)
    print(f"apply_{name}: relative difference {err:.1e}")

# %% the preconditioning matrix is one sparse block per (group, direction)
P = problem.preconditioner
print(f"preconditioner: {P.n_blocks} blocks of {P.block_size} rows, {P.nnz} nonzeros")

# %% flat flux in an infinite medium: A 1 is proportional to B 1
medium = CrossSectionLibrary({0: Material([1.0], [[0.5]], [0.6], [1.0])})
sides = {s: "reflective" for s in ("left", "right", "bottom", "top")}
inf = TransportProblem(build_mesh(6, 6, boundary=sides), medium, build_quadrature(4))
ones = np.ones(inf.size)
ratio = np.linalg.norm(inf.apply_B(ones)) / np.linalg.norm(inf.apply_A(ones))
print(f"||B 1|| / ||A 1|| = {ratio:.12f} (nu_sigma_f / sigma_a = 1.2)")
