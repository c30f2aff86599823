#include "cpgt/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "cpgt/error.hpp"

namespace cpgt {

int ambient_dim(ManifoldKind kind, int euclidean_size) {
  switch (kind) {
    case ManifoldKind::kEuclidean: return euclidean_size;
    case ManifoldKind::kRotation: return 4;
    case ManifoldKind::kRigidPose: return 7;
    case ManifoldKind::kSimilarity: return 8;
  }
  return 0;
}

int tangent_dim(ManifoldKind kind, int ambient_size) {
  switch (kind) {
    case ManifoldKind::kEuclidean: return ambient_size;
    case ManifoldKind::kRotation: return 3;
    case ManifoldKind::kRigidPose: return 6;
    case ManifoldKind::kSimilarity: return 7;
  }
  return 0;
}

namespace {

Eigen::Quaterniond quat_from(const double* x) { return Eigen::Quaterniond(x[3], x[0], x[1], x[2]); }

void store_quat(const Eigen::Quaterniond& q, double* out) {
  out[0] = q.x();
  out[1] = q.y();
  out[2] = q.z();
  out[3] = q.w();
}

}  // namespace

void retract(ManifoldKind kind, int ambient_size, const double* x, const double* delta, double* out) {
  switch (kind) {
    case ManifoldKind::kEuclidean:
      for (int i = 0; i < ambient_size; ++i) out[i] = x[i] + delta[i];
      return;
    case ManifoldKind::kRotation:
    case ManifoldKind::kRigidPose:
    case ManifoldKind::kSimilarity: {
      const Rotation r = Rotation(quat_from(x)) * Rotation::exp(Vec3(delta[0], delta[1], delta[2]));
      store_quat(r.quaternion(), out);
      if (kind == ManifoldKind::kRotation) return;
      for (int i = 0; i < 3; ++i) out[4 + i] = x[4 + i] + delta[3 + i];
      if (kind == ManifoldKind::kSimilarity) out[7] = x[7] * std::exp(delta[6]);
      return;
    }
  }
}

std::vector<double> to_block(const Rotation& r) {
  std::vector<double> v(4);
  store_quat(r.quaternion(), v.data());
  return v;
}

std::vector<double> to_block(const RigidPose& p) {
  std::vector<double> v(7);
  store_quat(p.rotation().quaternion(), v.data());
  for (int i = 0; i < 3; ++i) v[4 + i] = p.translation()[i];
  return v;
}

std::vector<double> to_block(const Similarity& s) {
  std::vector<double> v(8);
  store_quat(s.rotation().quaternion(), v.data());
  for (int i = 0; i < 3; ++i) v[4 + i] = s.translation()[i];
  v[7] = s.scale();
  return v;
}

Rotation rotation_from_block(const double* x) { return Rotation(quat_from(x)); }

RigidPose pose_from_block(const double* x) {
  return RigidPose(Rotation(quat_from(x)), Vec3(x[4], x[5], x[6]));
}

Similarity similarity_from_block(const double* x) {
  return Similarity(x[7], Rotation(quat_from(x)), Vec3(x[4], x[5], x[6]));
}

std::string_view to_string(ResidualGroup group) {
  switch (group) {
    case ResidualGroup::kMarkerReprojection: return "marker-reprojection";
    case ResidualGroup::kCpWorld: return "cp-world";
    case ResidualGroup::kFeatureReprojection: return "feature-reprojection";
    case ResidualGroup::kImuPreintegration: return "imu-preintegration";
    case ResidualGroup::kBiasWalk: return "bias-walk";
    case ResidualGroup::kGeneric: return "generic";
  }
  return "unknown";
}

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kGradientTolerance: return "gradient-tolerance";
    case TerminationReason::kParameterTolerance: return "parameter-tolerance";
    case TerminationReason::kFunctionTolerance: return "function-tolerance";
    case TerminationReason::kMaxIterations: return "max-iterations";
    case TerminationReason::kNoFurtherProgress: return "no-further-progress";
    case TerminationReason::kFailure: return "failure";
  }
  return "unknown";
}

double RobustLoss::rho(double s) const {
  switch (kind) {
    case Kind::kNone: return s;
    case Kind::kHuber: {
      const double d2 = scale * scale;
      return s <= d2 ? s : 2.0 * scale * std::sqrt(s) - d2;
    }
    case Kind::kCauchy: {
      const double c2 = scale * scale;
      return c2 * std::log1p(s / c2);
    }
  }
  return s;
}

double RobustLoss::rho_prime(double s) const {
  switch (kind) {
    case Kind::kNone: return 1.0;
    case Kind::kHuber: return s <= scale * scale ? 1.0 : scale / std::sqrt(s);
    case Kind::kCauchy: return 1.0 / (1.0 + s / (scale * scale));
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Problem

const Problem::Param& Problem::param(BlockId id) const {
  if (id.value < 0 || id.value >= static_cast<int>(params_.size())) {
    throw Error(ErrorCode::kInvalidArgument, "unknown parameter block " + std::to_string(id.value));
  }
  return params_[id.value];
}

Problem::Param& Problem::param(BlockId id) {
  return const_cast<Param&>(static_cast<const Problem*>(this)->param(id));
}

BlockId Problem::add_parameter_block(ManifoldKind kind, std::vector<double> values) {
  const int ambient = static_cast<int>(values.size());
  if (kind != ManifoldKind::kEuclidean && ambient != ambient_dim(kind, 0)) {
    throw Error(ErrorCode::kInvalidArgument, "parameter block size does not match its manifold");
  }
  if (ambient == 0) throw Error(ErrorCode::kInvalidArgument, "empty parameter block");
  params_.push_back({kind, std::move(values), cpgt::tangent_dim(kind, ambient), false});
  return BlockId{static_cast<int>(params_.size()) - 1};
}

BlockId Problem::add_euclidean(std::span<const double> values) {
  return add_parameter_block(ManifoldKind::kEuclidean, std::vector<double>(values.begin(), values.end()));
}

BlockId Problem::add_vec3(const Vec3& v) {
  return add_parameter_block(ManifoldKind::kEuclidean, {v.x(), v.y(), v.z()});
}

BlockId Problem::add_pose(const RigidPose& pose) {
  return add_parameter_block(ManifoldKind::kRigidPose, to_block(pose));
}

BlockId Problem::add_similarity(const Similarity& sim) {
  return add_parameter_block(ManifoldKind::kSimilarity, to_block(sim));
}

void Problem::set_constant(BlockId id, bool constant) { param(id).constant = constant; }
bool Problem::is_constant(BlockId id) const { return param(id).constant; }
ManifoldKind Problem::kind(BlockId id) const { return param(id).kind; }
int Problem::tangent_dim(BlockId id) const { return param(id).tangent; }
std::span<const double> Problem::values(BlockId id) const { return param(id).values; }
std::span<double> Problem::mutable_values(BlockId id) { return param(id).values; }

Vec3 Problem::vec3(BlockId id) const {
  const auto& v = param(id).values;
  if (v.size() != 3) throw Error(ErrorCode::kInvalidArgument, "block is not a 3-vector");
  return Vec3(v[0], v[1], v[2]);
}

RigidPose Problem::pose(BlockId id) const {
  const auto& p = param(id);
  if (p.kind != ManifoldKind::kRigidPose) throw Error(ErrorCode::kInvalidArgument, "block is not a rigid pose");
  return pose_from_block(p.values.data());
}

Similarity Problem::similarity(BlockId id) const {
  const auto& p = param(id);
  if (p.kind != ManifoldKind::kSimilarity) throw Error(ErrorCode::kInvalidArgument, "block is not a similarity");
  return similarity_from_block(p.values.data());
}

namespace {

Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "covariance eigen-decomposition failed");
  }
  const Eigen::VectorXd ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0) || !ev.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "measurement covariance is not positive-definite");
  }
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ResidualId Problem::add_residual_block(ResidualGroup group, std::shared_ptr<const CostFunction> cost,
                                       std::vector<BlockId> blocks, const Eigen::MatrixXd& covariance,
                                       RobustLoss loss) {
  if (!cost) throw Error(ErrorCode::kInvalidArgument, "null cost function");
  for (BlockId b : blocks) param(b);
  const int dim = cost->residual_dim();
  if (covariance.rows() != dim || covariance.cols() != dim) {
    throw Error(ErrorCode::kInvalidArgument, "covariance size does not match residual dimension");
  }
  const Eigen::MatrixXd sym = 0.5 * (covariance + covariance.transpose());
  residuals_.push_back({group, std::move(cost), std::move(blocks), sym, inverse_sqrt_spd(sym), loss});
  return ResidualId{static_cast<int>(residuals_.size()) - 1};
}

void Problem::scale_group_covariance(ResidualGroup group, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorCode::kInvalidArgument, "covariance scale factor must be positive");
  }
  const double w = 1.0 / std::sqrt(factor);
  for (auto& r : residuals_) {
    if (r.group != group) continue;
    r.covariance *= factor;
    r.sqrt_information *= w;
  }
}

void Problem::set_group_loss(ResidualGroup group, RobustLoss loss) {
  for (auto& r : residuals_) {
    if (r.group == group) r.loss = loss;
  }
}

std::size_t Problem::count_residual_blocks(ResidualGroup group) const {
  return static_cast<std::size_t>(
      std::count_if(residuals_.begin(), residuals_.end(), [&](const Residual& r) { return r.group == group; }));
}

// ---------------------------------------------------------------------------
// Linearization machinery

class Linearizer {
 public:
  explicit Linearizer(const Problem& problem) : problem_(problem) {
    offsets_.assign(problem.params_.size(), -1);
    for (std::size_t i = 0; i < problem.params_.size(); ++i) {
      if (problem.params_[i].constant) continue;
      offsets_[i] = dim_;
      dim_ += problem.params_[i].tangent;
    }
  }

  int dim() const { return dim_; }
  int offset(int block) const { return offsets_[block]; }

  /// Evaluates one residual block at explicit parameter pointers; returns
  /// false when undefined or non-finite. Jacobians are filled for
  /// non-constant blocks when requested.
  bool evaluate_block(const Problem::Residual& res, const std::vector<const double*>& ptrs,
                      Eigen::VectorXd& r, std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>* jac) const {
    const int m = res.cost->residual_dim();
    r.resize(m);
    if (!jac) {
      if (!res.cost->evaluate(ptrs.data(), r.data(), nullptr)) return false;
      return r.allFinite();
    }
    jac->resize(res.blocks.size());
    std::vector<double*> jptrs(res.blocks.size(), nullptr);
    for (std::size_t k = 0; k < res.blocks.size(); ++k) {
      const auto& p = problem_.params_[res.blocks[k].value];
      if (p.constant) continue;
      (*jac)[k].resize(m, p.tangent);
      jptrs[k] = (*jac)[k].data();
    }
    if (res.cost->has_analytic_jacobians()) {
      if (!res.cost->evaluate(ptrs.data(), r.data(), jptrs.data())) return false;
    } else {
      if (!res.cost->evaluate(ptrs.data(), r.data(), nullptr)) return false;
      std::vector<const double*> trial = ptrs;
      Eigen::VectorXd rp(m);
      for (std::size_t k = 0; k < res.blocks.size(); ++k) {
        if (!jptrs[k]) continue;
        const auto& p = problem_.params_[res.blocks[k].value];
        std::vector<double> moved(p.values.size());
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(p.tangent);
        for (int t = 0; t < p.tangent; ++t) {
          double scale = 1.0;
          if (p.kind == ManifoldKind::kEuclidean) scale = std::max(1.0, std::abs(p.values[t]));
          const double h = 1e-7 * scale;
          delta.setZero();
          delta[t] = h;
          retract(p.kind, static_cast<int>(p.values.size()), ptrs[k], delta.data(), moved.data());
          trial[k] = moved.data();
          if (!res.cost->evaluate(trial.data(), rp.data(), nullptr)) return false;
          (*jac)[k].col(t) = (rp - r) / h;
        }
        trial[k] = ptrs[k];
      }
    }
    if (!r.allFinite()) return false;
    for (std::size_t k = 0; k < res.blocks.size(); ++k) {
      if (jptrs[k] && !(*jac)[k].allFinite()) return false;
    }
    return true;
  }

  std::vector<const double*> pointers(const Problem::Residual& res,
                                      const std::vector<std::vector<double>>* override_values) const {
    std::vector<const double*> ptrs(res.blocks.size());
    for (std::size_t k = 0; k < res.blocks.size(); ++k) {
      const int b = res.blocks[k].value;
      ptrs[k] = override_values ? (*override_values)[b].data() : problem_.params_[b].values.data();
    }
    return ptrs;
  }

  [[noreturn]] void fail_block(int index) const {
    const auto& res = problem_.residuals_[index];
    throw Error(ErrorCode::kNonFinite, "residual block " + std::to_string(index) + " (" +
                                           std::string(to_string(res.group)) +
                                           ") produced a non-finite or undefined value");
  }

  /// Robust cost at explicit values; +inf if any block is undefined.
  double cost(const std::vector<std::vector<double>>* values, std::array<double, kNumResidualGroups>* group_sq,
              bool throw_on_failure) const {
    double total = 0.0;
    Eigen::VectorXd r;
    if (group_sq) group_sq->fill(0.0);
    for (std::size_t i = 0; i < problem_.residuals_.size(); ++i) {
      const auto& res = problem_.residuals_[i];
      if (!evaluate_block(res, pointers(res, values), r, nullptr)) {
        if (throw_on_failure) fail_block(static_cast<int>(i));
        return std::numeric_limits<double>::infinity();
      }
      const Eigen::VectorXd w = res.sqrt_information * r;
      const double s = w.squaredNorm();
      total += 0.5 * res.loss.rho(s);
      if (group_sq) (*group_sq)[static_cast<int>(res.group)] += s;
    }
    return total;
  }

  /// Builds the sparsity pattern of the upper triangle of J'^T J'.
  void build_pattern() {
    struct PairHash {
      std::size_t operator()(std::uint64_t k) const { return std::hash<std::uint64_t>()(k); }
    };
    std::unordered_map<std::uint64_t, int, PairHash> slot_of;
    std::vector<std::pair<int, int>> slot_blocks;
    residual_slots_.resize(problem_.residuals_.size());
    for (std::size_t i = 0; i < problem_.residuals_.size(); ++i) {
      const auto& res = problem_.residuals_[i];
      auto& slots = residual_slots_[i];
      slots.clear();
      for (std::size_t a = 0; a < res.blocks.size(); ++a) {
        for (std::size_t b = 0; b < res.blocks.size(); ++b) {
          const int ba = res.blocks[a].value, bb = res.blocks[b].value;
          if (offsets_[ba] < 0 || offsets_[bb] < 0 || offsets_[ba] > offsets_[bb]) continue;
          if (ba == bb && a > b) continue;
          const std::uint64_t key = (static_cast<std::uint64_t>(ba) << 32) | static_cast<std::uint32_t>(bb);
          auto [it, inserted] = slot_of.emplace(key, static_cast<int>(slot_blocks.size()));
          if (inserted) slot_blocks.emplace_back(ba, bb);
          slots.push_back({static_cast<int>(a), static_cast<int>(b), it->second});
        }
      }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    for (auto [ba, bb] : slot_blocks) {
      const int ra = offsets_[ba], cb = offsets_[bb];
      const int na = problem_.params_[ba].tangent, nb = problem_.params_[bb].tangent;
      for (int i = 0; i < na; ++i) {
        for (int j = 0; j < nb; ++j) {
          if (ba == bb && i > j) continue;
          triplets.emplace_back(ra + i, cb + j, 0.0);
        }
      }
    }
    hessian_.resize(dim_, dim_);
    hessian_.setFromTriplets(triplets.begin(), triplets.end());
    hessian_.makeCompressed();

    auto value_index = [&](int row, int col) {
      const int* inner = hessian_.innerIndexPtr();
      const int begin = hessian_.outerIndexPtr()[col];
      const int end = hessian_.outerIndexPtr()[col + 1];
      const int* hit = std::lower_bound(inner + begin, inner + end, row);
      return static_cast<int>(hit - inner);
    };
    slot_indices_.resize(slot_blocks.size());
    for (std::size_t s = 0; s < slot_blocks.size(); ++s) {
      auto [ba, bb] = slot_blocks[s];
      const int ra = offsets_[ba], cb = offsets_[bb];
      const int na = problem_.params_[ba].tangent, nb = problem_.params_[bb].tangent;
      auto& idx = slot_indices_[s];
      idx.assign(static_cast<std::size_t>(na * nb), -1);
      for (int i = 0; i < na; ++i) {
        for (int j = 0; j < nb; ++j) {
          if (ba == bb && i > j) continue;
          idx[i * nb + j] = value_index(ra + i, cb + j);
        }
      }
    }
    diagonal_indices_.resize(dim_);
    for (int d = 0; d < dim_; ++d) diagonal_indices_[d] = value_index(d, d);
  }

  /// Fills hessian_ values and gradient at the problem's current values;
  /// returns the robust cost. Throws on undefined residuals.
  double linearize(Eigen::VectorXd& gradient) {
    std::fill(hessian_.valuePtr(), hessian_.valuePtr() + hessian_.nonZeros(), 0.0);
    gradient.setZero(dim_);
    double total = 0.0;
    Eigen::VectorXd r;
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jac;
    std::vector<Eigen::MatrixXd> wj;
    double* values = hessian_.valuePtr();
    for (std::size_t i = 0; i < problem_.residuals_.size(); ++i) {
      const auto& res = problem_.residuals_[i];
      if (!evaluate_block(res, pointers(res, nullptr), r, &jac)) fail_block(static_cast<int>(i));
      Eigen::VectorXd wr = res.sqrt_information * r;
      const double s = wr.squaredNorm();
      total += 0.5 * res.loss.rho(s);
      const double weight = std::sqrt(res.loss.rho_prime(s));
      wr *= weight;
      wj.resize(res.blocks.size());
      for (std::size_t k = 0; k < res.blocks.size(); ++k) {
        const int b = res.blocks[k].value;
        if (offsets_[b] < 0) continue;
        wj[k] = weight * (res.sqrt_information * jac[k]);
        gradient.segment(offsets_[b], wj[k].cols()) += wj[k].transpose() * wr;
      }
      for (const auto& slot : residual_slots_[i]) {
        const Eigen::MatrixXd block = wj[slot.a].transpose() * wj[slot.b];
        const auto& idx = slot_indices_[slot.slot];
        const int nb = static_cast<int>(block.cols());
        for (int row = 0; row < block.rows(); ++row) {
          for (int col = 0; col < nb; ++col) {
            const int vi = idx[row * nb + col];
            if (vi >= 0) values[vi] += block(row, col);
          }
        }
      }
    }
    return total;
  }

  Eigen::SparseMatrix<double>& hessian() { return hessian_; }
  const std::vector<int>& diagonal_indices() const { return diagonal_indices_; }

 private:
  struct SlotRef {
    int a;
    int b;
    int slot;
  };
  const Problem& problem_;
  std::vector<int> offsets_;
  int dim_ = 0;
  std::vector<std::vector<SlotRef>> residual_slots_;
  std::vector<std::vector<int>> slot_indices_;
  std::vector<int> diagonal_indices_;
  Eigen::SparseMatrix<double> hessian_;
};

namespace {

std::array<int, kNumResidualGroups> exclusive_dims(const std::vector<std::vector<int>>& groups_per_block,
                                                    const std::vector<int>& tangent,
                                                    const std::vector<bool>& constant) {
  std::array<int, kNumResidualGroups> out{};
  for (std::size_t b = 0; b < groups_per_block.size(); ++b) {
    if (constant[b] || groups_per_block[b].size() != 1) continue;
    out[groups_per_block[b].front()] += tangent[b];
  }
  return out;
}

}  // namespace

std::array<GroupResiduals, kNumResidualGroups> collect_group_residuals(const Problem& problem) {
  std::array<GroupResiduals, kNumResidualGroups> out;
  std::vector<std::vector<int>> groups_per_block(problem.num_parameter_blocks());
  std::vector<int> tangent(problem.num_parameter_blocks());
  std::vector<bool> constant(problem.num_parameter_blocks());
  for (std::size_t b = 0; b < problem.num_parameter_blocks(); ++b) {
    tangent[b] = problem.tangent_dim(BlockId{static_cast<int>(b)});
    constant[b] = problem.is_constant(BlockId{static_cast<int>(b)});
  }
  std::array<std::vector<Eigen::VectorXd>, kNumResidualGroups> parts;
  for (std::size_t i = 0; i < problem.num_residual_blocks(); ++i) {
    const ResidualId id{static_cast<int>(i)};
    const int g = static_cast<int>(problem.group_of(id));
    parts[g].push_back(problem.whitened_residual(id));
    for (BlockId b : problem.blocks_of(id)) {
      auto& list = groups_per_block[b.value];
      if (std::find(list.begin(), list.end(), g) == list.end()) list.push_back(g);
    }
  }
  const auto exclusive = exclusive_dims(groups_per_block, tangent, constant);
  for (int g = 0; g < kNumResidualGroups; ++g) {
    if (parts[g].empty()) continue;
    int n = 0;
    for (const auto& v : parts[g]) n += static_cast<int>(v.size());
    GroupResiduals& gr = out[g];
    gr.present = true;
    gr.components = n;
    gr.whitened.resize(n);
    int at = 0;
    for (const auto& v : parts[g]) {
      gr.whitened.segment(at, v.size()) = v;
      at += static_cast<int>(v.size());
    }
    gr.redundancy = n - exclusive[g];
  }
  return out;
}

Eigen::VectorXd Problem::whitened_residual(ResidualId id) const {
  const auto& res = residuals_.at(id.value);
  std::vector<const double*> ptrs(res.blocks.size());
  for (std::size_t k = 0; k < res.blocks.size(); ++k) ptrs[k] = params_[res.blocks[k].value].values.data();
  Eigen::VectorXd r(res.cost->residual_dim());
  if (!res.cost->evaluate(ptrs.data(), r.data(), nullptr) || !r.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "residual block " + std::to_string(id.value) + " (" +
                                           std::string(to_string(res.group)) +
                                           ") produced a non-finite or undefined value");
  }
  return res.sqrt_information * r;
}

SolveReport solve(Problem& problem, const SolverOptions& options) {
  Linearizer lin(problem);
  if (lin.dim() == 0) throw Error(ErrorCode::kInvalidArgument, "problem has no free parameters");
  lin.build_pattern();

  SolveReport report;
  const int nblocks = static_cast<int>(problem.num_parameter_blocks());
  std::vector<std::vector<double>> current(nblocks);
  auto snapshot = [&] {
    for (int b = 0; b < nblocks; ++b) {
      auto v = problem.values(BlockId{b});
      current[b].assign(v.begin(), v.end());
    }
  };
  snapshot();

  const auto pre = collect_group_residuals(problem);
  std::array<int, kNumResidualGroups> redundancy{};
  for (int g = 0; g < kNumResidualGroups; ++g) redundancy[g] = pre[g].present ? pre[g].redundancy : 0;
  auto record = [&](int iter, double cost, double lambda, bool accepted,
                    const std::array<double, kNumResidualGroups>& group_sq) {
    IterationRecord rec;
    rec.iteration = iter;
    rec.cost = cost;
    rec.lambda = lambda;
    rec.accepted = accepted;
    for (int g = 0; g < kNumResidualGroups; ++g) {
      rec.group_variance_factor[g] = (pre[g].present && redundancy[g] > 0)
                                         ? group_sq[g] / redundancy[g]
                                         : std::numeric_limits<double>::quiet_NaN();
    }
    report.history.push_back(rec);
  };

  std::array<double, kNumResidualGroups> group_sq{};
  double cost = lin.cost(nullptr, &group_sq, true);
  report.initial_cost = cost;
  record(0, cost, options.initial_lambda, true, group_sq);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt;
  ldlt.analyzePattern(lin.hessian());

  double lambda = options.initial_lambda;
  Eigen::VectorXd gradient;
  std::vector<std::vector<double>> trial = current;
  report.termination = TerminationReason::kMaxIterations;
  bool done = false;

  for (int iter = 1; iter <= options.max_iterations && !done; ++iter) {
    lin.linearize(gradient);
    if (gradient.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      report.termination = TerminationReason::kGradientTolerance;
      break;
    }
    report.iterations = iter;
    Eigen::SparseMatrix<double>& h = lin.hessian();
    const std::vector<double> diag = [&] {
      std::vector<double> d(lin.dim());
      for (int i = 0; i < lin.dim(); ++i) d[i] = h.valuePtr()[lin.diagonal_indices()[i]];
      return d;
    }();

    double x_norm = 0.0;
    for (int b = 0; b < nblocks; ++b) {
      if (lin.offset(b) < 0) continue;
      for (double v : current[b]) x_norm += v * v;
    }
    x_norm = std::sqrt(x_norm);

    bool accepted = false;
    while (!accepted) {
      for (int i = 0; i < lin.dim(); ++i) {
        const double d = std::clamp(diag[i], 1e-6, 1e32);
        h.valuePtr()[lin.diagonal_indices()[i]] = diag[i] + lambda * d;
      }
      ldlt.factorize(h);
      Eigen::VectorXd step;
      bool solved = ldlt.info() == Eigen::Success;
      if (solved) {
        step = ldlt.solve(-gradient);
        solved = step.allFinite();
      }
      if (!solved) {
        lambda *= 10.0;
        if (lambda > 1e32) {
          report.termination = TerminationReason::kFailure;
          done = true;
          break;
        }
        continue;
      }
      if (step.norm() <= options.parameter_tolerance * (x_norm + options.parameter_tolerance)) {
        report.termination = TerminationReason::kParameterTolerance;
        done = true;
        break;
      }
      for (int b = 0; b < nblocks; ++b) {
        const int off = lin.offset(b);
        if (off < 0) continue;
        const auto kind = problem.kind(BlockId{b});
        retract(kind, static_cast<int>(current[b].size()), current[b].data(), step.data() + off, trial[b].data());
      }
      std::array<double, kNumResidualGroups> trial_sq{};
      const double new_cost = lin.cost(&trial, &trial_sq, false);
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double decrease = cost - new_cost;
        for (int b = 0; b < nblocks; ++b) {
          if (lin.offset(b) < 0) continue;
          current[b] = trial[b];
          auto dst = problem.mutable_values(BlockId{b});
          std::copy(trial[b].begin(), trial[b].end(), dst.begin());
        }
        record(iter, new_cost, lambda, true, trial_sq);
        ++report.accepted_steps;
        cost = new_cost;
        lambda = std::max(lambda / 10.0, 1e-16);
        accepted = true;
        if (decrease <= options.function_tolerance * std::max(cost, 1e-300) || cost == 0.0) {
          report.termination = TerminationReason::kFunctionTolerance;
          done = true;
        }
      } else {
        record(iter, cost, lambda, false, group_sq);
        lambda *= 10.0;
        if (lambda > 1e16) {
          report.termination = TerminationReason::kNoFurtherProgress;
          done = true;
          break;
        }
      }
    }
  }

  report.final_cost = cost;
  report.groups = collect_group_residuals(problem);
  return report;
}

double variance_factor(const SolveReport& report, ResidualGroup group) {
  const GroupResiduals& g = report.group(group);
  if (!g.present) {
    throw Error(ErrorCode::kInvalidArgument, "group " + std::string(to_string(group)) + " has no residuals");
  }
  if (g.redundancy <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "group " + std::string(to_string(group)) +
                                                 " has non-positive redundancy " + std::to_string(g.redundancy));
  }
  return g.whitened.squaredNorm() / static_cast<double>(g.redundancy);
}

std::vector<Eigen::MatrixXd> marginal_covariances(const Problem& problem, std::span<const BlockId> blocks) {
  Linearizer lin(problem);
  if (lin.dim() == 0) throw Error(ErrorCode::kInvalidArgument, "problem has no free parameters");
  for (BlockId b : blocks) {
    if (problem.is_constant(b)) {
      throw Error(ErrorCode::kInvalidArgument, "constant block has no marginal covariance");
    }
  }
  lin.build_pattern();
  Eigen::VectorXd gradient;
  lin.linearize(gradient);
  // Rank is judged on the Jacobi-scaled Hessian (unit diagonal) so that the
  // test does not depend on the units of individual parameters.
  const Eigen::SparseMatrix<double>& h = lin.hessian();
  Eigen::VectorXd scale(h.rows());
  int nullity = 0;
  for (int i = 0; i < h.rows(); ++i) {
    const double hii = h.coeff(i, i);
    if (hii > 0.0) {
      scale[i] = 1.0 / std::sqrt(hii);
    } else {
      scale[i] = 1.0;
      ++nullity;
    }
  }
  Eigen::SparseMatrix<double> scaled = scale.asDiagonal() * h * scale.asDiagonal();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt;
  ldlt.compute(scaled);
  if (ldlt.info() != Eigen::Success && nullity == 0) {
    // An exactly zero pivot stops the factorization; a tiny shift exposes the null space.
    Eigen::SparseMatrix<double> shifted = scaled;
    for (int i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) += 1e-14;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper, Eigen::AMDOrdering<int>> probe(shifted);
    if (probe.info() == Eigen::Success) {
      const Eigen::VectorXd d = probe.vectorD();
      for (int i = 0; i < d.size(); ++i) nullity += d[i] > 1e-10 ? 0 : 1;
    }
    nullity = std::max(nullity, 1);
  } else if (nullity == 0) {
    const Eigen::VectorXd d = ldlt.vectorD();
    for (int i = 0; i < d.size(); ++i) {
      if (!(d[i] > 1e-10)) ++nullity;
    }
  }
  if (nullity > 0) {
    throw Error(ErrorCode::kRankDeficient,
                "Gauss-Newton Hessian is rank deficient (null-space dimension " + std::to_string(nullity) + ")");
  }
  std::vector<Eigen::MatrixXd> out;
  out.reserve(blocks.size());
  for (BlockId b : blocks) {
    const int off = lin.offset(b.value);
    const int n = problem.tangent_dim(b);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(lin.dim(), n);
    for (int k = 0; k < n; ++k) rhs(off + k, k) = scale[off + k];
    const Eigen::MatrixXd cols = ldlt.solve(rhs);
    Eigen::MatrixXd c = scale.segment(off, n).asDiagonal() * cols.middleRows(off, n);
    out.push_back(0.5 * (c + c.transpose()));
  }
  return out;
}

Eigen::MatrixXd marginal_covariance(const Problem& problem, BlockId block) {
  const BlockId one[] = {block};
  return marginal_covariances(problem, one).front();
}

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<const double*> param_pointers(std::span<const std::vector<double>> params) {
  std::vector<const double*> ptrs;
  for (const auto& p : params) ptrs.push_back(p.data());
  return ptrs;
}

}  // namespace

std::vector<Eigen::MatrixXd> numeric_jacobians(const CostFunction& cost, std::span<const ManifoldKind> kinds,
                                               std::span<const std::vector<double>> params, double step,
                                               bool central) {
  const int m = cost.residual_dim();
  auto ptrs = param_pointers(params);
  Eigen::VectorXd r0(m), rp(m), rm(m);
  if (!cost.evaluate(ptrs.data(), r0.data(), nullptr)) {
    throw Error(ErrorCode::kNonFinite, "cost function undefined at the base point");
  }
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const int ambient = static_cast<int>(params[k].size());
    const int n = tangent_dim(kinds[k], ambient);
    Eigen::MatrixXd j(m, n);
    std::vector<double> plus(ambient), minus(ambient);
    for (int t = 0; t < n; ++t) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
      delta[t] = step;
      retract(kinds[k], ambient, params[k].data(), delta.data(), plus.data());
      ptrs[k] = plus.data();
      if (!cost.evaluate(ptrs.data(), rp.data(), nullptr)) {
        throw Error(ErrorCode::kNonFinite, "cost function undefined near the base point");
      }
      if (central) {
        delta[t] = -step;
        retract(kinds[k], ambient, params[k].data(), delta.data(), minus.data());
        ptrs[k] = minus.data();
        if (!cost.evaluate(ptrs.data(), rm.data(), nullptr)) {
          throw Error(ErrorCode::kNonFinite, "cost function undefined near the base point");
        }
        j.col(t) = (rp - rm) / (2.0 * step);
      } else {
        j.col(t) = (rp - r0) / step;
      }
      ptrs[k] = params[k].data();
    }
    out.push_back(j);
  }
  return out;
}

std::vector<Eigen::MatrixXd> analytic_jacobians(const CostFunction& cost, std::span<const ManifoldKind> kinds,
                                                std::span<const std::vector<double>> params) {
  const int m = cost.residual_dim();
  auto ptrs = param_pointers(params);
  std::vector<RowMajorMatrix> storage;
  std::vector<double*> jptrs;
  for (std::size_t k = 0; k < params.size(); ++k) {
    storage.emplace_back(m, tangent_dim(kinds[k], static_cast<int>(params[k].size())));
  }
  for (auto& s : storage) jptrs.push_back(s.data());
  Eigen::VectorXd r(m);
  if (!cost.evaluate(ptrs.data(), r.data(), jptrs.data())) {
    throw Error(ErrorCode::kNonFinite, "cost function undefined at the base point");
  }
  std::vector<Eigen::MatrixXd> out;
  for (auto& s : storage) out.emplace_back(s);
  return out;
}

void write_diagnostics_csv(const SolveReport& report, std::ostream& out) {
  out << "iteration,cost,lambda,accepted";
  for (int g = 0; g < kNumResidualGroups; ++g) out << ",vf_" << to_string(static_cast<ResidualGroup>(g));
  out << '\n';
  const auto old_precision = out.precision(12);
  for (const auto& rec : report.history) {
    out << rec.iteration << ',' << rec.cost << ',' << rec.lambda << ',' << (rec.accepted ? 1 : 0);
    for (double vf : rec.group_variance_factor) {
      out << ',';
      if (std::isfinite(vf)) out << vf;
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cpgt
