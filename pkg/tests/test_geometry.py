import numpy as np
import pytest

from reloreta.geometry import (
    DipoleSourceSpec,
    ElectrodeArray,
    GeometryError,
    HeadModel,
    SourceGrid,
    build_sphere_grid,
    extended_source_dipoles,
    geometry_from_json,
    geometry_to_json,
    standard_1020_electrodes,
)


class TestBuildSphereGrid:
    def test_points_respect_margin(self):
        grid = build_sphere_grid(85.0, 12.0, 5.0)
        radii = np.linalg.norm(grid.positions_mm, axis=1)
        assert radii.max() <= 80.0 + 1e-6

    def test_lattice_structure(self):
        grid = build_sphere_grid(50.0, 10.0)
        # every coordinate is an integer multiple of the spacing
        assert np.allclose(np.round(grid.positions_mm / 10.0) * 10.0,
                           grid.positions_mm)

    def test_lexicographic_order(self):
        grid = build_sphere_grid(50.0, 15.0)
        keys = [tuple(p) for p in grid.positions_mm]
        assert keys == sorted(keys)

    def test_origin_offset(self):
        grid = build_sphere_grid(50.0, 10.0, origin_mm=(5.0, 5.0, 5.0))
        assert np.allclose((grid.positions_mm - 5.0) % 10.0, 0.0)

    def test_contains_center_when_unshifted(self):
        grid = build_sphere_grid(50.0, 10.0)
        assert np.any(np.all(grid.positions_mm == 0.0, axis=1))

    def test_empty_grid_raises(self):
        with pytest.raises(GeometryError, match="empty grid"):
            build_sphere_grid(50.0, 60.0)
        with pytest.raises(GeometryError, match="empty grid"):
            # the offset lattice has no point within 5 mm of the center
            build_sphere_grid(50.0, 40.0, margin_mm=45.0, origin_mm=(20.0, 20.0, 20.0))

    def test_invalid_args_raise(self):
        with pytest.raises(GeometryError):
            build_sphere_grid(50.0, -1.0)
        with pytest.raises(GeometryError):
            build_sphere_grid(50.0, 10.0, margin_mm=-1.0)


class TestStandardMontage:
    def test_twenty_unique_labels(self):
        arr = standard_1020_electrodes(85.0)
        assert arr.n_electrodes == 20
        assert len(set(arr.labels)) == 20

    def test_on_scalp(self):
        arr = standard_1020_electrodes(85.0)
        assert np.allclose(np.linalg.norm(arr.positions_mm, axis=1), 85.0)

    def test_vertex_and_symmetry(self):
        arr = standard_1020_electrodes(10.0)
        pos = dict(zip(arr.labels, arr.positions_mm))
        assert np.allclose(pos["Cz"], [0.0, 0.0, 10.0])
        # left/right pairs mirror in x
        for left, right in (("C3", "C4"), ("F7", "F8"), ("O1", "O2")):
            assert np.allclose(pos[left] * [-1, 1, 1], pos[right], atol=1e-9)
        # frontal sites are anterior, occipital posterior
        assert pos["Fz"][1] > 0 > pos["Oz"][1]

    def test_bad_radius(self):
        with pytest.raises(GeometryError):
            standard_1020_electrodes(0.0)


class TestExtendedSourceDipoles:
    def test_single_dipole_is_nearest_voxel(self):
        grid = build_sphere_grid(50.0, 10.0)
        spec = DipoleSourceSpec(center_mm=(12.0, 1.0, -1.0), moment=(0, 0, 1))
        dipoles = extended_source_dipoles(spec, grid, seed=0)
        assert len(dipoles) == 1
        voxel, moment = dipoles[0]
        assert np.allclose(grid.positions_mm[voxel], [10.0, 0.0, 0.0])
        assert np.allclose(moment, [0, 0, 1])

    def test_moment_sum_conserved_and_within_extent(self):
        grid = build_sphere_grid(50.0, 10.0)
        spec = DipoleSourceSpec(center_mm=(0.0, 0.0, 0.0), moment=(1.0, 2.0, 3.0),
                                extent_mm=15.0, n_dipoles=4)
        dipoles = extended_source_dipoles(spec, grid, seed=3)
        assert len(dipoles) == 4
        total = sum(m for _, m in dipoles)
        assert np.allclose(total, [1.0, 2.0, 3.0])
        for voxel, _ in dipoles:
            assert np.linalg.norm(grid.positions_mm[voxel]) <= 15.0 + 1e-9
        assert len({v for v, _ in dipoles}) == 4  # no duplicates

    def test_deterministic_given_seed(self):
        grid = build_sphere_grid(50.0, 10.0)
        spec = DipoleSourceSpec(center_mm=(0.0, 0.0, 0.0), moment=(0, 0, 1),
                                extent_mm=20.0, n_dipoles=5)
        a = extended_source_dipoles(spec, grid, seed=7)
        b = extended_source_dipoles(spec, grid, seed=7)
        assert [v for v, _ in a] == [v for v, _ in b]

    def test_too_few_candidates_raises(self):
        grid = build_sphere_grid(50.0, 10.0)
        spec = DipoleSourceSpec(center_mm=(0.0, 0.0, 0.0), moment=(0, 0, 1),
                                extent_mm=5.0, n_dipoles=9)
        with pytest.raises(GeometryError, match="short by"):
            extended_source_dipoles(spec, grid, seed=0)

    def test_spec_validation(self):
        with pytest.raises(GeometryError):
            DipoleSourceSpec(center_mm=(0, 0, 0), moment=(0, 0, 1), extent_mm=5.0)
        with pytest.raises(GeometryError):
            DipoleSourceSpec(center_mm=(0, 0, 0), moment=(0, 0, 1), n_dipoles=3)


class TestGeometryJson:
    def test_round_trip(self):
        model = HeadModel(radius_mm=85.0, conductivity_s_per_m=0.33)
        arr = standard_1020_electrodes(85.0)
        grid = build_sphere_grid(85.0, 25.0, 5.0)
        doc = geometry_to_json(model, arr, grid)
        model2, arr2, grid2 = geometry_from_json(doc)
        assert model2.radius_mm == model.radius_mm
        assert model2.conductivity_s_per_m == model.conductivity_s_per_m
        assert arr2.labels == arr.labels
        assert np.allclose(arr2.positions_mm, arr.positions_mm)
        assert grid2.spacing_mm == grid.spacing_mm
        assert np.allclose(grid2.positions_mm, grid.positions_mm)


class TestValidation:
    def test_head_model(self):
        with pytest.raises(GeometryError):
            HeadModel(radius_mm=-1.0, conductivity_s_per_m=0.33)
        with pytest.raises(GeometryError):
            HeadModel(radius_mm=85.0, conductivity_s_per_m=0.0)

    def test_electrode_array(self):
        with pytest.raises(GeometryError):
            ElectrodeArray(positions_mm=np.zeros((2, 3)), labels=("a",))

    def test_source_grid(self):
        with pytest.raises(GeometryError):
            SourceGrid(positions_mm=np.zeros((0, 3)), spacing_mm=10.0)
        with pytest.raises(GeometryError):
            SourceGrid(positions_mm=np.zeros((4, 2)), spacing_mm=10.0)
