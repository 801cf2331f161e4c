#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "axunet/rng.hpp"
#include "axunet/tensor.hpp"

namespace testutil {

template <typename T>
axunet::Tensor<T> random_tensor(axunet::Shape shape, axunet::Rng& rng, bool requires_grad = false,
                                double lo = -1.0, double hi = 1.0) {
    std::vector<T> vals(static_cast<std::size_t>(axunet::numel(shape)));
    for (auto& v : vals) v = static_cast<T>(rng.uniform(lo, hi));
    return axunet::Tensor<T>::from_data(std::move(shape), std::move(vals), requires_grad);
}

// Uniform over [-hi,-lo] u [lo,hi]; keeps values away from kinks of relu/max.
template <typename T>
axunet::Tensor<T> random_tensor_away_from_zero(axunet::Shape shape, axunet::Rng& rng,
                                               bool requires_grad = false, double lo = 0.1,
                                               double hi = 1.0) {
    std::vector<T> vals(static_cast<std::size_t>(axunet::numel(shape)));
    for (auto& v : vals) {
        const double m = rng.uniform(lo, hi);
        v = static_cast<T>(rng.bernoulli(0.5) ? m : -m);
    }
    return axunet::Tensor<T>::from_data(std::move(shape), std::move(vals), requires_grad);
}

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        base_ = std::filesystem::temp_directory_path() /
                ("axunet_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(base_);
        std::filesystem::create_directories(base_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(base_, ec);
    }
    const std::filesystem::path& path() const { return base_; }

  private:
    std::filesystem::path base_;
};

}  // namespace testutil
