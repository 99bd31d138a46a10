#pragma once

// Deterministic synthetic datasets. Real data exists only to train the
// teacher and to evaluate the student; the distillation loop itself sees
// it exclusively through EvalView.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tadfkd/autodiff.hpp"
#include "tadfkd/losses.hpp"
#include "tadfkd/rng.hpp"

namespace tadfkd {

struct Dataset {
    Tensor x;                       // [N x d], features in [-1, 1]
    std::vector<int> y;             // labels in {0 .. C-1}
    int classes = 0;
    std::optional<GridShape> grid;  // (H, W) with H*W = d when present
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    std::string spec;               // maker description, for cache provenance
    std::uint64_t seed = 0;

    int feature_width() const { return x.cols(); }

    Tensor gather_rows(std::span<const int> rows) const;
    Tensor train_x() const { return gather_rows(train_indices); }
    Tensor test_x() const { return gather_rows(test_indices); }
    std::vector<int> train_y() const;
    std::vector<int> test_y() const;
};

// The only window the distillation loop gets onto real data: the held-out
// test split, for accuracy evaluation.
class EvalView {
public:
    explicit EvalView(const Dataset& ds) : ds_(&ds) {}
    Tensor x() const { return ds_->test_x(); }
    std::vector<int> y() const { return ds_->test_y(); }
    int classes() const { return ds_->classes; }
    std::optional<GridShape> grid() const { return ds_->grid; }
    std::size_t size() const { return ds_->test_indices.size(); }

private:
    const Dataset* ds_;
};

// Gaussian clusters at seeded random centers in [-0.8, 0.8]^d, clipped to
// [-1, 1], shuffled 80/20 train/test.
Dataset make_blobs(int classes, int per_class, int d, double spread, std::uint64_t seed);

// One seeded binary template per class on an (H, W) grid, values +-0.8,
// pairwise distinct by rejection, plus Gaussian pixel noise, clipped.
Dataset make_grid_patterns(int classes, int per_class, GridShape grid, double noise,
                           std::uint64_t seed);

// i.i.d. standard normal latent batch, deterministic per stream position.
Tensor sample_latent(Rng& rng, int batch, int d_z);

// Dataset cache: JSON {spec, seed, x, y, grid, split}.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace tadfkd
