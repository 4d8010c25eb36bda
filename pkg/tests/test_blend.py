import numpy as np
import pytest

from tilecascade import Grid, blend, build_layout, build_masks, extract, one_hot_stitch, seam_energy
from tilecascade.blend import default_sigma, ownership_map

from conftest import random_grid


def coverage_sum(layout, masks):
    total = np.zeros((layout.canvas_h, layout.canvas_w))
    for (r, c), w in zip(layout.offsets, masks.weights):
        total[r : r + layout.patch_h, c : c + layout.patch_w] += w
    return total


# Independent 1-D oracle for the feathered weights: blur the two-patch hard
# ownership split with an explicitly built, normalized Gaussian kernel.
def feather_oracle_1d(canvas, patch, off2, sigma):
    cells = np.arange(canvas)
    c1 = (patch - 1) / 2.0
    c2 = off2 + (patch - 1) / 2.0
    own2 = (np.abs(cells - c2) < np.abs(cells - c1)).astype(float)
    radius = int(3.0 * sigma + 0.5)
    xs = np.arange(-radius, radius + 1)
    kern = np.exp(-0.5 * (xs / sigma) ** 2)
    kern /= kern.sum()
    padded = np.pad(own2, radius, mode="edge")
    return np.array([np.dot(padded[i : i + 2 * radius + 1], kern) for i in range(canvas)])


class TestMasks:
    def test_single_patch_weight_is_one(self):
        lay = build_layout(64, 64, 64, 64, 0.5)
        for mode in ("uniform", "gaussian_feather"):
            masks = build_masks(lay, mode)
            assert np.abs(coverage_sum(lay, masks) - 1).max() < 1e-12
            assert np.abs(masks.weights[0] - 1).max() < 1e-12

    def test_uniform_half_overlap_even_split(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        masks = build_masks(lay, "uniform")
        w1 = masks.weights[0]
        assert np.abs(w1[:, :32] - 1.0).max() < 1e-12  # exclusive zone
        assert np.abs(w1[:, 32:] - 0.5).max() < 1e-12  # overlap averaged

    def test_gaussian_feather_matches_direct_convolution_oracle(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        sigma = 8.0  # overlap width 32 / 4
        masks = build_masks(lay, "gaussian_feather", sigma)
        blurred = feather_oracle_1d(96, 64, 32, sigma)
        # in the overlap (canvas cols 32..63) raw weights sum to 1 exactly,
        # so patch 2's normalized weight equals the blurred ownership there
        w2 = masks.weights[1][10]  # any row: the field is constant per column
        assert np.abs(w2[:32] - blurred[32:64]).max() < 1e-9

    def test_gaussian_feather_monotone_one_to_zero(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        masks = build_masks(lay, "gaussian_feather", 8.0)
        w1 = masks.weights[0][10][32:]  # patch 1 across the overlap
        assert all(a >= b for a, b in zip(w1, w1[1:]))
        assert w1[0] > 0.95 and w1[-1] < 0.05

    @pytest.mark.parametrize("mode", ["uniform", "gaussian_feather"])
    @pytest.mark.parametrize(
        "canvas,o", [(64, 0.5), (128, 0.5), (256, 0.25), (256, 0.5)]
    )
    def test_partition_of_unity(self, mode, canvas, o):
        lay = build_layout(canvas, canvas, 64, 64, o)
        masks = build_masks(lay, mode)
        assert np.abs(coverage_sum(lay, masks) - 1).max() < 1e-6
        for w in masks.weights:
            assert w.min() >= 0

    def test_center_dominance(self):
        lay = build_layout(128, 128, 64, 64, 0.5)
        masks = build_masks(lay, "gaussian_feather")
        for i, (r, c) in enumerate(lay.offsets):
            cy, cx = r + 31, c + 31  # own center cell (upper of the two mid cells)
            own = masks.weights[i][31, 31]
            for j, (r2, c2) in enumerate(lay.offsets):
                if j == i:
                    continue
                if r2 <= cy < r2 + 64 and c2 <= cx < c2 + 64:
                    assert own > masks.weights[j][cy - r2, cx - c2]

    def test_default_sigma_quarter_overlap(self):
        lay = build_layout(128, 128, 64, 64, 0.5)  # spacing 32, overlap width 32
        assert default_sigma(lay) == 8.0

    def test_invalid_sigma_rejected(self):
        lay = build_layout(128, 128, 64, 64, 0.5)
        with pytest.raises(ValueError):
            build_masks(lay, "gaussian_feather", sigma=-1.0)
        with pytest.raises(ValueError):
            build_masks(lay, "nearest")

    def test_ownership_tiles_canvas(self):
        lay = build_layout(128, 128, 64, 64, 0.5)
        owner = ownership_map(lay)
        assert owner.min() >= 0
        assert set(np.unique(owner)) == set(range(lay.count))


class TestBlend:
    def test_constant_patches_exact(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        patches = [Grid.full(2, 64, 64, 4.25) for _ in range(lay.count)]
        for mode in ("uniform", "gaussian_feather"):
            out = blend(patches, lay, build_masks(lay, mode))
            assert np.all(out.data == np.float32(4.25))

    def test_consistent_patches_reproduce_source(self, rng):
        src = random_grid(rng, channels=4, height=128, width=128)
        lay = build_layout(128, 128, 64, 64, 0.5)
        patches = [extract(src, lay, i) for i in range(lay.count)]
        for mode in ("uniform", "gaussian_feather"):
            out = blend(patches, lay, build_masks(lay, mode))
            assert np.abs(out.data - src.data).max() < 1e-6

    def test_exact_where_single_cover(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        patches = [Grid.full(1, 64, 64, 0.0), Grid.full(1, 64, 64, 1.0)]
        out = blend(patches, lay, build_masks(lay, "gaussian_feather"))
        assert np.all(out.data[:, :, :32] == 0.0)
        assert np.all(out.data[:, :, 64:] == 1.0)

    def test_conflicting_patches_jump_comparison(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        patches = [Grid.full(1, 64, 64, 0.0), Grid.full(1, 64, 64, 1.0)]
        gau = blend(patches, lay, build_masks(lay, "gaussian_feather"))
        uni = blend(patches, lay, build_masks(lay, "uniform"))
        jump = lambda g: np.abs(np.diff(g.data[0], axis=1)).max()
        assert jump(gau) < jump(uni)
        sigma = build_masks(lay, "gaussian_feather").sigma
        assert jump(gau) <= 1.0 / (2.0 * sigma)

    def test_count_mismatch_rejected(self):
        lay = build_layout(128, 128, 64, 64, 0.5)
        with pytest.raises(ValueError):
            blend([Grid.zeros(1, 64, 64)], lay, build_masks(lay, "uniform"))

    def test_shape_mismatch_rejected(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        bad = [Grid.zeros(1, 32, 32), Grid.zeros(1, 32, 32)]
        with pytest.raises(ValueError):
            blend(bad, lay, build_masks(lay, "uniform"))


class TestSeamOrdering:
    def conflict_fixture(self):
        lay = build_layout(128, 128, 64, 64, 0.5)
        patches = []
        for i in range(lay.count):
            pr, pc = divmod(i, 3)
            patches.append(Grid.full(1, 64, 64, float((pr + pc) % 2)))
        return lay, patches

    def test_gaussian_beats_uniform_beats_hard(self):
        lay, patches = self.conflict_fixture()
        hard = one_hot_stitch(patches, lay)
        uni = blend(patches, lay, build_masks(lay, "uniform"))
        gau = blend(patches, lay, build_masks(lay, "gaussian_feather"))
        s_g = seam_energy(gau, lay)
        s_u = seam_energy(uni, lay)
        s_h = seam_energy(hard, lay)
        assert s_g < s_u < s_h

    def test_one_hot_paste_semantics(self):
        lay = build_layout(64, 96, 64, 64, 0.5)
        patches = [Grid.full(1, 64, 64, 0.0), Grid.full(1, 64, 64, 1.0)]
        out = one_hot_stitch(patches, lay)
        assert np.all(out.data[:, :, :32] == 0.0)
        assert np.all(out.data[:, :, 32:] == 1.0)
