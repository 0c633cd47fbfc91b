"""Solver and algebra for the determinant-of-Hessian-lift Neumann problem.

The package solves det(W(D2u)) = f with the Robin condition u_nu = -u + phi
on strictly convex domains, where W is the lift of the Hessian whose
eigenvalues are the m-subset sums of the Hessian eigenvalues (m = n-1 for
the PDE).  Import the submodules directly::

    from nconvex import symfun, cone, woperator, geometry
    from nconvex import discretize, solver, barriers
"""

__version__ = "0.1.0"
