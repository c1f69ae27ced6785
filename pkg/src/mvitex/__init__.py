"""mvitex: view-dependent surface texture optimization.

Textures cubes, spheres, and mirrored ground planes so that each configured
viewpoint shows its own content, by gradient descent against pluggable
score providers (pixel targets locally, a diffusion scorer service
remotely).
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    CameraPose,
    CylinderSpec,
    MirrorSpec,
    SceneSpec,
    ViewSpec,
    build_uv_query_map,
    cube_corner_views,
    sphere_views,
)
from .optimizer import RunConfig, inverse_project, run, train_step  # noqa: F401
from .texture_field import (  # noqa: F401
    HashGridConfig,
    HashGridField,
    MLPConfig,
    PlainGridField,
)
