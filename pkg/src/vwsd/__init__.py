"""Visual word sense disambiguation lab: pick the right image among 10 candidates.

Dual tiny transformer encoders (text + hierarchical windowed vision), linear
projection and fusion, a graph-convolution pass over each sample's candidate
set, and a sigmoid ranking head — trained with a from-scratch reverse-mode
tape on a procedurally generated benchmark.
"""

__version__ = "0.1.0"
