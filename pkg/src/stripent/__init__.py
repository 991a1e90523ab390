"""Strip entropies of Z^2 nearest-neighbor shifts of finite type."""

__version__ = "0.1.0"
