#pragma once

#include <array>
#include <compare>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cpgt/geometry.hpp"

namespace cpgt {

/// Parameter manifolds. Ambient layouts:
///   euclidean-n   [x0 .. xn-1]
///   rotation      [qx qy qz qw]                      tangent 3
///   rigid-pose    [qx qy qz qw tx ty tz]             tangent 6 (rot, trans)
///   similarity    [qx qy qz qw tx ty tz s]           tangent 7 (rot, trans, log-scale)
/// Rotation increments are right-multiplied, translations added in the
/// ambient frame, scale multiplied by exp(delta).
enum class ManifoldKind { kEuclidean, kRotation, kRigidPose, kSimilarity };

int ambient_dim(ManifoldKind kind, int euclidean_size);
int tangent_dim(ManifoldKind kind, int ambient_size);
void retract(ManifoldKind kind, int ambient_size, const double* x, const double* delta, double* out);

std::vector<double> to_block(const Rotation& r);
std::vector<double> to_block(const RigidPose& p);
std::vector<double> to_block(const Similarity& s);
Rotation rotation_from_block(const double* x);
RigidPose pose_from_block(const double* x);
Similarity similarity_from_block(const double* x);

enum class ResidualGroup {
  kMarkerReprojection,
  kCpWorld,
  kFeatureReprojection,
  kImuPreintegration,
  kBiasWalk,
  kGeneric,
};
inline constexpr int kNumResidualGroups = 6;
std::string_view to_string(ResidualGroup group);

struct RobustLoss {
  enum class Kind { kNone, kHuber, kCauchy };
  Kind kind = Kind::kNone;
  double scale = 1.0;

  static RobustLoss none() { return {}; }
  static RobustLoss huber(double delta) { return {Kind::kHuber, delta}; }
  static RobustLoss cauchy(double c) { return {Kind::kCauchy, c}; }

  /// rho(s) and rho'(s) of the squared whitened norm s.
  double rho(double s) const;
  double rho_prime(double s) const;
};

/// Residual function in the Ceres style: jacobians[i] is either null or a
/// row-major (residual_dim x tangent_dim(block i)) buffer, differentiated
/// with respect to the block's tangent increment.
class CostFunction {
 public:
  virtual ~CostFunction() = default;
  virtual int residual_dim() const = 0;
  /// Returns false when the residual is undefined at these parameters.
  virtual bool evaluate(const double* const* params, double* residuals, double** jacobians) const = 0;
  /// When false the solver differentiates numerically (forward differences).
  virtual bool has_analytic_jacobians() const { return true; }
};

struct BlockId {
  int value = -1;
  auto operator<=>(const BlockId&) const = default;
};

struct ResidualId {
  int value = -1;
  auto operator<=>(const ResidualId&) const = default;
};

class Problem {
 public:
  BlockId add_parameter_block(ManifoldKind kind, std::vector<double> values);
  BlockId add_euclidean(std::span<const double> values);
  BlockId add_vec3(const Vec3& v);
  BlockId add_pose(const RigidPose& pose);
  BlockId add_similarity(const Similarity& sim);

  void set_constant(BlockId id, bool constant = true);
  bool is_constant(BlockId id) const;
  ManifoldKind kind(BlockId id) const;
  int tangent_dim(BlockId id) const;
  std::span<const double> values(BlockId id) const;
  std::span<double> mutable_values(BlockId id);
  Vec3 vec3(BlockId id) const;
  RigidPose pose(BlockId id) const;
  Similarity similarity(BlockId id) const;

  /// `covariance` is the measurement covariance (residual_dim square, SPD).
  /// Throws Error(kInvalidArgument) for unknown blocks, dimension mismatch or a
  /// covariance that is not positive-definite.
  ResidualId add_residual_block(ResidualGroup group, std::shared_ptr<const CostFunction> cost,
                                std::vector<BlockId> blocks, const Eigen::MatrixXd& covariance,
                                RobustLoss loss = RobustLoss::none());

  /// Multiplies every measurement covariance of the group by `factor`.
  void scale_group_covariance(ResidualGroup group, double factor);
  void set_group_loss(ResidualGroup group, RobustLoss loss);

  std::size_t num_parameter_blocks() const { return params_.size(); }
  std::size_t num_residual_blocks() const { return residuals_.size(); }
  std::size_t count_residual_blocks(ResidualGroup group) const;
  ResidualGroup group_of(ResidualId id) const { return residuals_.at(id.value).group; }
  const Eigen::MatrixXd& covariance(ResidualId id) const { return residuals_.at(id.value).covariance; }
  std::span<const BlockId> blocks_of(ResidualId id) const { return residuals_.at(id.value).blocks; }

  /// Whitened residual of one block at the current values (no robust weighting).
  /// Throws Error(kNonFinite) naming the block if evaluation fails.
  Eigen::VectorXd whitened_residual(ResidualId id) const;

 private:
  friend class Linearizer;
  struct Param {
    ManifoldKind kind;
    std::vector<double> values;
    int tangent;
    bool constant = false;
  };
  struct Residual {
    ResidualGroup group;
    std::shared_ptr<const CostFunction> cost;
    std::vector<BlockId> blocks;
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd sqrt_information;  ///< covariance^(-1/2), symmetric
    RobustLoss loss;
  };
  const Param& param(BlockId id) const;
  Param& param(BlockId id);

  std::vector<Param> params_;
  std::vector<Residual> residuals_;
};

struct SolverOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double parameter_tolerance = 1e-12;
  double function_tolerance = 1e-14;
  double initial_lambda = 1e-6;
};

enum class TerminationReason {
  kGradientTolerance,
  kParameterTolerance,
  kFunctionTolerance,
  kMaxIterations,
  kNoFurtherProgress,
  kFailure,
};
std::string_view to_string(TerminationReason reason);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double lambda = 0.0;
  bool accepted = false;
  std::array<double, kNumResidualGroups> group_variance_factor{};  ///< NaN when undefined
};

struct GroupResiduals {
  bool present = false;
  Eigen::VectorXd whitened;  ///< concatenated Sigma^(-1/2) r over the group's blocks
  int components = 0;
  int redundancy = 0;        ///< components minus exclusively observed tangent dims
};

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  TerminationReason termination = TerminationReason::kFailure;
  std::vector<IterationRecord> history;
  std::array<GroupResiduals, kNumResidualGroups> groups;

  const GroupResiduals& group(ResidualGroup g) const { return groups[static_cast<int>(g)]; }
  bool converged() const { return termination != TerminationReason::kFailure; }
};

/// Levenberg-Marquardt with multiplicative damping on diag(J'J). Cost is
/// 0.5 * sum rho(|Sigma^(-1/2) r|^2). Throws Error(kNonFinite) naming the
/// residual block when a residual or Jacobian is not finite at a
/// linearization point, Error(kInvalidArgument) for a problem without free
/// parameters.
SolveReport solve(Problem& problem, const SolverOptions& options = {});

/// Collects whitened residuals and redundancies at the current values.
std::array<GroupResiduals, kNumResidualGroups> collect_group_residuals(const Problem& problem);

/// sigma0^2 = sum r'^T r' / redundancy for the group. Throws
/// Error(kInvalidArgument) if the group is absent or has no redundancy.
double variance_factor(const SolveReport& report, ResidualGroup group);

/// Tangent-space marginal covariance from the inverse Gauss-Newton Hessian
/// over non-constant blocks. Throws Error(kRankDeficient) with the null-space
/// dimension when the gauge is not fixed.
Eigen::MatrixXd marginal_covariance(const Problem& problem, BlockId block);
std::vector<Eigen::MatrixXd> marginal_covariances(const Problem& problem, std::span<const BlockId> blocks);

/// Tangent-space Jacobians by finite differences (central by default).
std::vector<Eigen::MatrixXd> numeric_jacobians(const CostFunction& cost, std::span<const ManifoldKind> kinds,
                                               std::span<const std::vector<double>> params,
                                               double step = 1e-6, bool central = true);
/// Analytic Jacobians evaluated through the same interface.
std::vector<Eigen::MatrixXd> analytic_jacobians(const CostFunction& cost, std::span<const ManifoldKind> kinds,
                                                std::span<const std::vector<double>> params);

/// Per-iteration cost, damping and group variance factors as comma-separated text.
void write_diagnostics_csv(const SolveReport& report, std::ostream& out);

}  // namespace cpgt
