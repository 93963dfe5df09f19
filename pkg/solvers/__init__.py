# Solvers Package
# Contains the model, proximal operators, linear systems and ADMM loops for the regularized MSVM
