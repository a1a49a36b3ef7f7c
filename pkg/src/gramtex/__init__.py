"""gramtex: parametric texture analysis and synthesis with Gram-matrix
CNN features — synthesis, style transfer, category inversion, attribute
editing, image quilting, and a desk-scale training harness."""

__version__ = "0.1.0"
