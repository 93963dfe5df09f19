# Services Package
# Contains data, I/O, logging and benchmark services for the regularized MSVM solver
