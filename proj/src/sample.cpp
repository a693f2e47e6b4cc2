#include "mpe/sample.hpp"

#include <numeric>
#include <stdexcept>

namespace mpe {

std::string to_string(Provenance p) {
    return p == Provenance::mixture ? "mixture" : "component";
}

Sample::Sample(Eigen::MatrixXd points, Provenance provenance, std::vector<std::int64_t> ids)
    : points_(std::move(points)), provenance_(provenance), ids_(std::move(ids)) {
    if (ids_.size() != static_cast<std::size_t>(points_.rows())) {
        throw std::invalid_argument("sample ids do not match row count");
    }
    if (!points_.allFinite()) throw std::invalid_argument("sample contains non-finite values");
}

Sample::Sample(Eigen::MatrixXd points, Provenance provenance)
    : Sample(points, provenance, [&] {
          std::vector<std::int64_t> ids(static_cast<std::size_t>(points.rows()));
          std::iota(ids.begin(), ids.end(), std::int64_t{0});
          return ids;
      }()) {}

Sample Sample::select(const std::vector<std::size_t>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), points_.cols());
    std::vector<std::int64_t> ids;
    ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= size()) throw std::out_of_range("sample row out of range");
        out.row(static_cast<Eigen::Index>(i)) = points_.row(static_cast<Eigen::Index>(rows[i]));
        ids.push_back(ids_[rows[i]]);
    }
    return Sample(std::move(out), provenance_, std::move(ids));
}

bool Sample::operator==(const Sample& other) const {
    return provenance_ == other.provenance_ && ids_ == other.ids_ &&
           points_.rows() == other.points_.rows() && points_.cols() == other.points_.cols() &&
           points_ == other.points_;
}

}  // namespace mpe
