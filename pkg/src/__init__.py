# graph-pde
# Elliptic PDEs on weighted directed graphs: solvers, well-posedness checks and a finite-difference bridge
