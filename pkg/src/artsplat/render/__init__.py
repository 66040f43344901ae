"""Gaussian splat rendering: projection, compositing and differentiable losses."""
from .backend import BACKEND_NAME
from .core import (Projected2D, RenderConfig, composite_pixel, project_gaussian, render,
                   render_articulated)

__all__ = ["BACKEND_NAME", "Projected2D", "RenderConfig", "composite_pixel",
           "project_gaussian", "render", "render_articulated"]
