from .domain_grid import CylinderDomain, Grid, PartitionOfUnity, CutoffK, build_partition, build_cutoff, localize_rhs
