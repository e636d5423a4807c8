"""Figure rendering for wmswitch CSV experiment outputs."""

from .render import (
    FigureSpec,
    MissingColumnsError,
    SchemaMismatchError,
    read_wmswitch_csv,
    render,
    render_performance,
    render_spec,
    render_sweep,
    render_traces,
)

__all__ = [
    "FigureSpec",
    "MissingColumnsError",
    "SchemaMismatchError",
    "read_wmswitch_csv",
    "render",
    "render_performance",
    "render_spec",
    "render_sweep",
    "render_traces",
]
