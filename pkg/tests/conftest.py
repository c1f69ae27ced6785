import numpy as np
import pytest

from mvitex.geometry import CylinderSpec, MirrorSpec, SceneSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cube_scene():
    return SceneSpec.cube(1.0)


@pytest.fixture
def sphere_scene():
    return SceneSpec.sphere(1.0)


@pytest.fixture
def cylinder_scene():
    return SceneSpec.reflective_plane(
        plane_extent=2.0,
        reflectors=[CylinderSpec(center=(0.0, 0.0), radius=0.4, height=1.2)],
    )


@pytest.fixture
def mirror_scene():
    return SceneSpec.reflective_plane(
        plane_extent=2.0,
        reflectors=[
            MirrorSpec(
                center=(0.0, 0.0),
                curvature_radius=0.8,
                arc_degrees=150.0,
                height=1.2,
                facing_deg=0.0,
            )
        ],
    )
