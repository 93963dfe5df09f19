# Configuration Package
# Contains configuration management for the regularized MSVM solver
