#include "tadfkd/data.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace tadfkd {

namespace {

double clip_unit(double v) { return std::clamp(v, -1.0, 1.0); }

void split_80_20(Dataset& ds, Rng& shuffle) {
    const int n = ds.x.rows();
    const std::vector<int> perm = shuffle.permutation(n);
    const int n_train = n * 8 / 10;
    ds.train_indices.assign(perm.begin(), perm.begin() + n_train);
    ds.test_indices.assign(perm.begin() + n_train, perm.end());
}

} // namespace

Tensor Dataset::gather_rows(std::span<const int> rows) const {
    const int d = x.cols();
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < d; ++j) {
            out.at(static_cast<int>(i), j) = x.at(rows[i], j);
        }
    }
    return out;
}

std::vector<int> Dataset::train_y() const {
    std::vector<int> out;
    out.reserve(train_indices.size());
    for (int i : train_indices) out.push_back(y[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<int> Dataset::test_y() const {
    std::vector<int> out;
    out.reserve(test_indices.size());
    for (int i : test_indices) out.push_back(y[static_cast<std::size_t>(i)]);
    return out;
}

Dataset make_blobs(int classes, int per_class, int d, double spread, std::uint64_t seed) {
    if (classes < 2 || d < 2 || per_class < 1 || spread < 0.0) {
        throw InvalidSpec("make_blobs: need classes >= 2, d >= 2, per_class >= 1, spread >= 0");
    }
    Dataset ds;
    ds.classes = classes;
    ds.seed = seed;
    ds.spec = "blobs(classes=" + std::to_string(classes) + ",per_class=" +
              std::to_string(per_class) + ",d=" + std::to_string(d) +
              ",spread=" + std::to_string(spread) + ")";
    const int n = classes * per_class;
    ds.x = Tensor::zeros({n, d});
    ds.y.resize(static_cast<std::size_t>(n));

    Rng centers_rng(seed, streams::kDataCenters);
    std::vector<double> centers(static_cast<std::size_t>(classes) * d);
    for (double& c : centers) c = centers_rng.uniform(-0.8, 0.8);

    Rng noise_rng(seed, streams::kDataNoise);
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int k = 0; k < per_class; ++k, ++row) {
            for (int j = 0; j < d; ++j) {
                const double v = centers[static_cast<std::size_t>(c) * d + j] +
                                 spread * noise_rng.next_normal();
                ds.x.at(row, j) = clip_unit(v);
            }
            ds.y[static_cast<std::size_t>(row)] = c;
        }
    }

    Rng shuffle_rng(seed, streams::kDataShuffle);
    split_80_20(ds, shuffle_rng);
    return ds;
}

Dataset make_grid_patterns(int classes, int per_class, GridShape grid, double noise,
                           std::uint64_t seed) {
    const auto [h, w] = grid;
    if (classes < 2 || per_class < 1 || h < 2 || w < 2 || noise < 0.0) {
        throw InvalidSpec("make_grid_patterns: need classes >= 2, per_class >= 1, "
                          "H, W >= 2, noise >= 0");
    }
    const int d = h * w;
    Dataset ds;
    ds.classes = classes;
    ds.seed = seed;
    ds.spec = "grid_patterns(classes=" + std::to_string(classes) + ",per_class=" +
              std::to_string(per_class) + ",grid=" + std::to_string(h) + "x" +
              std::to_string(w) + ",noise=" + std::to_string(noise) + ")";
    ds.grid = grid;
    const int n = classes * per_class;
    ds.x = Tensor::zeros({n, d});
    ds.y.resize(static_cast<std::size_t>(n));

    // Pairwise-distinct binary templates at +-0.8, by rejection.
    Rng template_rng(seed, streams::kDataTemplates);
    std::vector<std::vector<double>> templates;
    for (int c = 0; c < classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 1000) {
                throw InvalidSpec("make_grid_patterns: cannot find distinct templates");
            }
            std::vector<double> t(static_cast<std::size_t>(d));
            for (double& v : t) v = (template_rng.next_u64() & 1u) ? 0.8 : -0.8;
            const bool duplicate = std::any_of(templates.begin(), templates.end(),
                                               [&](const auto& other) { return other == t; });
            if (!duplicate) {
                templates.push_back(std::move(t));
                break;
            }
        }
    }

    Rng noise_rng(seed, streams::kDataNoise);
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int k = 0; k < per_class; ++k, ++row) {
            for (int j = 0; j < d; ++j) {
                const double v = templates[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] +
                                 noise * noise_rng.next_normal();
                ds.x.at(row, j) = clip_unit(v);
            }
            ds.y[static_cast<std::size_t>(row)] = c;
        }
    }

    Rng shuffle_rng(seed, streams::kDataShuffle);
    split_80_20(ds, shuffle_rng);
    return ds;
}

Tensor sample_latent(Rng& rng, int batch, int d_z) {
    if (batch < 1 || d_z < 1) throw InvalidSpec("sample_latent: batch and d_z must be >= 1");
    return rng.normal_tensor({batch, d_z});
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["spec"] = {{"classes", ds.classes}, {"desc", ds.spec}};
    doc["seed"] = ds.seed;
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < ds.x.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < ds.x.cols(); ++j) row.push_back(ds.x.at(i, j));
        rows.push_back(std::move(row));
    }
    doc["x"] = std::move(rows);
    doc["y"] = ds.y;
    if (ds.grid.has_value()) {
        doc["grid"] = {ds.grid->first, ds.grid->second};
    } else {
        doc["grid"] = nullptr;
    }
    doc["split"] = {{"train", ds.train_indices}, {"test", ds.test_indices}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot open " + path.string());
    out << doc.dump() << '\n';
    if (!out) throw IoError("save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset: cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_dataset: " + path.string() + ": " + e.what());
    }

    Dataset ds;
    ds.classes = doc["spec"]["classes"].get<int>();
    ds.spec = doc["spec"].value("desc", std::string{});
    ds.seed = doc["seed"].get<std::uint64_t>();
    const auto& rows = doc["x"];
    const int n = static_cast<int>(rows.size());
    const int d = n > 0 ? static_cast<int>(rows[0].size()) : 0;
    if (n == 0 || d == 0) throw IoError("load_dataset: empty feature matrix");
    ds.x = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ds.x.at(i, j) = rows[static_cast<std::size_t>(i)]
                                                        [static_cast<std::size_t>(j)]
                                                            .get<double>();
    ds.y = doc["y"].get<std::vector<int>>();
    if (!doc["grid"].is_null()) {
        ds.grid = GridShape{doc["grid"][0].get<int>(), doc["grid"][1].get<int>()};
    }
    ds.train_indices = doc["split"]["train"].get<std::vector<int>>();
    ds.test_indices = doc["split"]["test"].get<std::vector<int>>();
    return ds;
}

} // namespace tadfkd
