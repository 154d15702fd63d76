#include "dspace/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dspace/engine.hpp"
#include "dspace/error.hpp"

namespace dspace {

namespace {

std::uint64_t checked_power(int base, int exp, const char* what) {
  std::uint64_t v = 1;
  for (int i = 0; i < exp; ++i) {
    if (v > std::numeric_limits<std::uint64_t>::max() / 2 / static_cast<std::uint64_t>(std::max(base, 1))) {
      throw Error(ErrorCode::capacity, what);
    }
    v *= static_cast<std::uint64_t>(base);
  }
  return v;
}

class BoxSearch {
 public:
  BoxSearch(const FeasibilityTensor& t, const SetpointCell& cell)
      : t_(t), cell_(cell), d_(t.dims), res_(t.resolution), lo_(static_cast<std::size_t>(d_)), hi_(static_cast<std::size_t>(d_)) {
    stride_.assign(static_cast<std::size_t>(d_) + 1, 1);
    for (int k = d_ - 1; k >= 0; --k) stride_[static_cast<std::size_t>(k)] = stride_[static_cast<std::size_t>(k) + 1] * static_cast<std::size_t>(res_);
    max_rest_.assign(static_cast<std::size_t>(d_) + 1, 1);
    for (int k = d_ - 1; k >= 0; --k) {
      max_rest_[static_cast<std::size_t>(k)] = max_rest_[static_cast<std::size_t>(k) + 1] * static_cast<std::uint64_t>(res_ - 1);
    }
  }

  GridBox run() {
    search(0, t_.feasible, 1);
    return best_;
  }

 private:
  // All points of the minimal setpoint region of dims k.. are feasible in
  // `mask` (which covers dims k..d-1).
  bool alive(int k, const std::vector<std::uint8_t>& mask) const {
    if (k == d_) return mask[0] != 0;
    std::vector<int> idx;
    for (int j = k; j < d_; ++j) idx.push_back(cell_.must_lo[static_cast<std::size_t>(j)]);
    while (true) {
      std::size_t flat = 0;
      for (int j = k; j < d_; ++j) flat += static_cast<std::size_t>(idx[static_cast<std::size_t>(j - k)]) * stride_[static_cast<std::size_t>(j) + 1];
      if (!mask[flat]) return false;
      int j = d_ - 1;
      for (; j >= k; --j) {
        auto& v = idx[static_cast<std::size_t>(j - k)];
        if (v < cell_.must_hi[static_cast<std::size_t>(j)]) {
          ++v;
          break;
        }
        v = cell_.must_lo[static_cast<std::size_t>(j)];
      }
      if (j < k) return true;
    }
  }

  // Elementwise AND of `acc` with slice j of `mask` (slices have size s).
  static void and_slice(std::vector<std::uint8_t>& acc, const std::vector<std::uint8_t>& mask, int j, std::size_t s) {
    const std::size_t off = static_cast<std::size_t>(j) * s;
    for (std::size_t i = 0; i < s; ++i) acc[i] &= mask[off + i];
  }

  void leaf(std::uint64_t volume) {
    ++best_.boxes_examined;
    bool better = !best_.found || volume > best_.index_volume;
    if (!better && volume == best_.index_volume) {
      better = lo_ < best_.lo || (lo_ == best_.lo && hi_ < best_.hi);
    }
    if (better) {
      best_.found = true;
      best_.lo = lo_;
      best_.hi = hi_;
      best_.index_volume = volume;
    }
  }

  void search(int k, const std::vector<std::uint8_t>& mask, std::uint64_t prod) {
    if (k == d_) {
      leaf(prod);
      return;
    }
    const auto ku = static_cast<std::size_t>(k);
    const std::size_t s = stride_[ku + 1];
    const int ml = cell_.must_lo[ku];
    const int mh = cell_.must_hi[ku];

    std::vector<std::uint8_t> base(s, 1);
    for (int j = ml; j <= mh; ++j) and_slice(base, mask, j, s);
    if (!alive(k + 1, base)) return;

    // down[ml - lo] = AND of slices lo..mh, for every lo that stays alive.
    std::vector<std::vector<std::uint8_t>> down{base};
    for (int lo = ml - 1; lo >= 0; --lo) {
      std::vector<std::uint8_t> next = down.back();
      and_slice(next, mask, lo, s);
      if (!alive(k + 1, next)) break;
      down.push_back(std::move(next));
    }
    const int lo_min = ml - static_cast<int>(down.size()) + 1;

    for (int lo = lo_min; lo <= ml; ++lo) {
      const auto& core = down[static_cast<std::size_t>(ml - lo)];
      std::vector<std::vector<std::uint8_t>> up{core};
      for (int hi = mh + 1; hi < res_; ++hi) {
        std::vector<std::uint8_t> next = up.back();
        and_slice(next, mask, hi, s);
        if (!alive(k + 1, next)) break;
        up.push_back(std::move(next));
      }
      for (int hi = mh + static_cast<int>(up.size()) - 1; hi >= mh; --hi) {
        const std::uint64_t p = prod * static_cast<std::uint64_t>(hi - lo);
        // Remaining dimensions can at most span the full grid.
        if (best_.found && p * max_rest_[ku + 1] < best_.index_volume) break;
        lo_[ku] = lo;
        hi_[ku] = hi;
        search(k + 1, up[static_cast<std::size_t>(hi - mh)], p);
      }
    }
  }

  const FeasibilityTensor& t_;
  const SetpointCell& cell_;
  int d_;
  int res_;
  std::vector<std::size_t> stride_;
  std::vector<std::uint64_t> max_rest_;
  std::vector<int> lo_;
  std::vector<int> hi_;
  GridBox best_;
};

}  // namespace

void GridSpec::validate() const {
  if (resolution < 2) throw Error(ErrorCode::specification, "grid resolution must be at least 2");
}

double FeasibilityTensor::coordinate(int index) const {
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(resolution - 1);
}

std::size_t FeasibilityTensor::flat(std::span<const int> index) const {
  if (static_cast<int>(index.size()) != dims) throw Error(ErrorCode::contract, "grid index has the wrong dimension");
  std::size_t f = 0;
  for (int i : index) {
    if (i < 0 || i >= resolution) throw Error(ErrorCode::contract, "grid index out of range");
    f = f * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(i);
  }
  return f;
}

FeasibilityTensor evaluate_grid(const NormalizedProblem& problem, const GridSpec& spec) {
  spec.validate();
  const int d = problem.dims;
  if (d > kGridMaxDims && !spec.allow_large) {
    std::ostringstream msg;
    msg << "grid search over " << d << " dimensions exceeds the guard of " << kGridMaxDims
        << " (the grid grows as resolution^p, e.g. 8^10 points at p = 10); override explicitly to force it";
    throw Error(ErrorCode::capacity, msg.str());
  }
  const std::uint64_t points = checked_power(spec.resolution, d, "grid has too many points");
  if (points > (std::uint64_t{1} << 34)) throw Error(ErrorCode::capacity, "grid has too many points");
  checked_power(spec.resolution - 1, d, "grid volume index overflows");

  FeasibilityTensor t;
  t.dims = d;
  t.resolution = spec.resolution;
  t.feasible.assign(static_cast<std::size_t>(points), 0);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> z(static_cast<std::size_t>(d), -1.0);
  for (std::size_t f = 0; f < t.feasible.size(); ++f) {
    bool ok = true;
    for (const auto& r : problem.responses) {
      const auto v = r.evaluate(z, TiMode::exact);
      if ((!std::isinf(r.accept_lower()) && v.lower() < r.accept_lower()) ||
          (!std::isinf(r.accept_upper()) && v.upper() > r.accept_upper())) {
        ok = false;
        break;
      }
    }
    t.feasible[f] = ok ? 1 : 0;
    for (int k = d - 1; k >= 0; --k) {
      const auto ku = static_cast<std::size_t>(k);
      if (++idx[ku] < spec.resolution) {
        z[ku] = t.coordinate(idx[ku]);
        break;
      }
      idx[ku] = 0;
      z[ku] = -1.0;
    }
  }
  return t;
}

SetpointCell setpoint_cell(std::span<const double> setpoint, int resolution) {
  SetpointCell c;
  for (double s : setpoint) {
    const double pos = (std::clamp(s, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(resolution - 1);
    const double r = std::round(pos);
    if (std::abs(pos - r) <= 1e-9) {
      c.must_lo.push_back(static_cast<int>(r));
      c.must_hi.push_back(static_cast<int>(r));
    } else {
      const int k = static_cast<int>(std::floor(pos));
      c.must_lo.push_back(k);
      c.must_hi.push_back(k + 1);
    }
  }
  return c;
}

GridBox largest_feasible_box(const FeasibilityTensor& tensor, const SetpointCell& cell) {
  if (static_cast<int>(cell.must_lo.size()) != tensor.dims || static_cast<int>(cell.must_hi.size()) != tensor.dims) {
    throw Error(ErrorCode::contract, "setpoint cell has the wrong dimension");
  }
  for (int k = 0; k < tensor.dims; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (cell.must_lo[ku] < 0 || cell.must_hi[ku] >= tensor.resolution || cell.must_lo[ku] > cell.must_hi[ku]) {
      throw Error(ErrorCode::contract, "setpoint cell outside the grid");
    }
  }
  if (tensor.dims == 0) {
    GridBox b;
    b.found = !tensor.feasible.empty() && tensor.feasible[0] != 0;
    b.index_volume = 1;
    b.volume = 1.0;
    return b;
  }
  GridBox box = BoxSearch(tensor, cell).run();
  if (box.found) {
    const double step = 2.0 / static_cast<double>(tensor.resolution - 1);
    box.volume = 1.0;
    for (int k = 0; k < tensor.dims; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      box.volume *= static_cast<double>(box.hi[ku] - box.lo[ku]) * step;
    }
  }
  return box;
}

GridOutcome compute_grid_design_space(const DsProblem& problem, const GridSpec& spec) {
  const NormalizedProblem np = normalize_problem(problem);
  const auto d = static_cast<std::size_t>(np.dims);
  GridOutcome out;
  out.spec = spec;
  const FeasibilityTensor tensor = evaluate_grid(np, spec);
  out.points = tensor.size();
  for (auto v : tensor.feasible) out.feasible_points += v;
  out.box = largest_feasible_box(tensor, setpoint_cell(np.setpoint, spec.resolution));

  DsResult& res = out.result;
  res.seed = np.config.seed;
  std::vector<double> x(2 * d);
  if (!out.box.found) {
    for (std::size_t i = 0; i < d; ++i) x[i] = x[d + i] = np.setpoint[i];
    describe_box(problem, np, x, res);
    res.certificate.feasible = false;
    res.status = DsStatus::infeasible;
    res.message = "no feasible grid box contains the setpoint";
    for (const auto& r : np.responses) {
      const auto v = r.evaluate(np.setpoint, TiMode::exact);
      if ((!std::isinf(r.accept_lower()) && v.lower() < r.accept_lower()) ||
          (!std::isinf(r.accept_upper()) && v.upper() > r.accept_upper())) {
        res.violated_response = r.name();
        res.message = "setpoint violates the acceptance limits of response '" + r.name() + "'";
        break;
      }
    }
    return out;
  }
  for (std::size_t i = 0; i < d; ++i) {
    x[i] = tensor.coordinate(out.box.lo[i]);
    x[d + i] = tensor.coordinate(out.box.hi[i]);
  }
  const bool levels_ok = describe_box(problem, np, x, res);
  if (!levels_ok) {
    res.status = DsStatus::infeasible;
    res.message = "grid box admits no categorical level";
  } else if (!res.certificate.feasible) {
    res.status = DsStatus::infeasible_at_tolerance;
    res.message = "grid box violates the acceptance limits between grid points";
  } else {
    res.status = DsStatus::feasible;
    res.message = "grid design space found";
  }
  return out;
}

}  // namespace dspace
