#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mpe {

enum class Provenance { mixture, component };
std::string to_string(Provenance p);

/// Row-major point set drawn from the mixture F or the component H.
/// `ids` are stable row identifiers that survive subsampling and copying.
class Sample {
public:
    Sample() = default;
    Sample(Eigen::MatrixXd points, Provenance provenance, std::vector<std::int64_t> ids);
    /// Ids 0..n-1.
    Sample(Eigen::MatrixXd points, Provenance provenance);

    const Eigen::MatrixXd& points() const noexcept { return points_; }
    Provenance provenance() const noexcept { return provenance_; }
    const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
    bool empty() const noexcept { return points_.rows() == 0; }

    /// Rows at the given positions, ids carried along.
    Sample select(const std::vector<std::size_t>& rows) const;

    bool operator==(const Sample& other) const;

private:
    Eigen::MatrixXd points_;
    Provenance provenance_ = Provenance::mixture;
    std::vector<std::int64_t> ids_;
};

}  // namespace mpe
