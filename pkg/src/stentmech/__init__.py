"""Plaque-resolved coronary cross-section mechanics toolkit.

Pipeline stages: GMM segmentation of intimal HU samples, layered annular
meshing of centerline slices, quasi-static plane-strain FE of balloon/stent
expansion, first-principal stress statistics, and stress-restenosis
correlation sweeps.
"""

__version__ = "0.1.0"
