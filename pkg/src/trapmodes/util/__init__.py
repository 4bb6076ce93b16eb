from . import fourier
