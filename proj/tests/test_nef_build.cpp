/*
 * Copyright 2026 The snnbot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "snnbot/error.hpp"
#include "snnbot/nef_build.hpp"

namespace snnbot {
namespace {

// Independent route to the regularized least-squares decoders: QR on the
// augmented system [A; sigma * sqrt(N) * I] d = [Y; 0].
Eigen::MatrixXd qr_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& y, double reg) {
  const double sigma = reg * a.maxCoeff();
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd aug(a.rows() + n, n);
  aug << a, Eigen::MatrixXd::Identity(n, n) * sigma * std::sqrt(static_cast<double>(a.rows()));
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(a.rows() + n, y.cols());
  rhs.topRows(a.rows()) = y;
  return aug.colPivHouseholderQr().solve(rhs);
}

CompiledEnsemble make_ensemble(int n, int d, std::uint64_t seed, NeuronModel model = NeuronModel::RateLIF,
                               int n_eval = 500) {
  ModelGraph g;
  Ensemble e;
  e.id = "e";
  e.n_neurons = n;
  e.dimensions = d;
  e.neuron_model = model;
  e.seed = seed;
  e.n_eval_points = n_eval;
  g.add_ensemble(e);
  return compile(validate_graph(g).value(), Backend::Reference).ensembles.at(0);
}

double identity_rmse(const CompiledEnsemble& ens, double reg) {
  const Eigen::MatrixXd a = activity_matrix(ens, ens.eval_points);
  const Eigen::MatrixXd d = solve_decoders(a, ens.eval_points, reg);
  return std::sqrt((a * d - ens.eval_points).squaredNorm() / static_cast<double>(a.rows()));
}

TEST(SampleEncoders, OneDimensionalAreSigns) {
  Rng rng(1);
  const auto e = sample_encoders(200, 1, rng);
  for (Eigen::Index i = 0; i < e.rows(); ++i) EXPECT_EQ(std::abs(e(i, 0)), 1.0);
}

TEST(SampleEncoders, UnitNormAndIsotropic) {
  Rng rng(2);
  const auto e = sample_encoders(10000, 3, rng);
  for (Eigen::Index i = 0; i < e.rows(); ++i) ASSERT_NEAR(e.row(i).norm(), 1.0, 1e-12);
  EXPECT_LT(e.colwise().mean().norm(), 0.05);
}

TEST(SampleEncoders, Deterministic) {
  Rng a(42, "encoders");
  Rng b(42, "encoders");
  EXPECT_EQ(sample_encoders(50, 4, a), sample_encoders(50, 4, b));
}

TEST(SampleEvalPoints, UniformInDisk) {
  Rng rng(5);
  const auto p = sample_eval_points(100000, 2, 1.0, rng);
  const auto inner = (p.rowwise().norm().array() <= 0.5).count();
  EXPECT_NEAR(static_cast<double>(inner) / 100000.0, 0.25, 0.01);
  EXPECT_LE(p.rowwise().norm().maxCoeff(), 1.0);
}

TEST(SampleEvalPoints, ZeroRadiusAndDeterminism) {
  Rng rng(6);
  EXPECT_TRUE(sample_eval_points(100, 3, 0.0, rng).isZero(0.0));
  Rng a(7);
  Rng b(7);
  EXPECT_EQ(sample_eval_points(100, 3, 2.0, a), sample_eval_points(100, 3, 2.0, b));
}

TEST(ActivityMatrix, OriginBelowPositiveIntercepts) {
  CompiledEnsemble ens;
  ens.model = NeuronModel::RateLIF;
  ens.encoders = Eigen::MatrixXd::Ones(3, 1);
  const std::vector<double> rates{200.0, 250.0, 300.0};
  const std::vector<double> intercepts{0.1, 0.3, 0.5};
  ens.gain_bias = solve_gain_bias(rates, intercepts, {}, ens.model);
  const auto a = activity_matrix(ens, Eigen::MatrixXd::Zero(1, 1));
  EXPECT_TRUE(a.isZero(0.0));
}

TEST(ActivityMatrix, SingleNeuronAtRadius) {
  CompiledEnsemble ens;
  ens.model = NeuronModel::RateLIF;
  ens.radius = 2.5;
  ens.encoders = Eigen::MatrixXd::Ones(1, 1);
  const double rate = 200.0;
  const double intercept = 0.0;
  ens.gain_bias = solve_gain_bias({&rate, 1}, {&intercept, 1}, {}, ens.model);
  const auto a = activity_matrix(ens, Eigen::MatrixXd::Constant(1, 1, 2.5));
  EXPECT_NEAR(a(0, 0), 200.0, 1e-9);
}

TEST(ActivityMatrix, NonNegative) {
  const auto ens = make_ensemble(50, 2, 3);
  EXPECT_GE(activity_matrix(ens, ens.eval_points).minCoeff(), 0.0);
}

TEST(SolveDecoders, ZeroTargetsGiveZeroDecoders) {
  const auto ens = make_ensemble(30, 1, 4);
  const auto a = activity_matrix(ens, ens.eval_points);
  EXPECT_TRUE(solve_decoders(a, Eigen::MatrixXd::Zero(a.rows(), 2), 0.1).isZero(0.0));
}

TEST(SolveDecoders, ScalarNormalEquation) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(20, 1, 100.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(20, 1, 0.5);
  EXPECT_NEAR(solve_decoders(a, y, 0.0)(0, 0), 0.005, 1e-15);
}

TEST(SolveDecoders, RankDeficientWithoutRegularizationReports) {
  Eigen::MatrixXd a(10, 2);
  a.col(0).setLinSpaced(10, 0.0, 90.0);
  a.col(1) = a.col(0);
  try {
    solve_decoders(a, Eigen::MatrixXd::Ones(10, 1), 0.0);
    FAIL() << "expected SingularSystem";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularSystem);
  }
  EXPECT_NO_THROW(solve_decoders(a, Eigen::MatrixXd::Ones(10, 1), 0.1));
}

TEST(SolveDecoders, IdentityAccuracyAndOracleAgreement) {
  const auto ens = make_ensemble(100, 1, 8);
  const auto a = activity_matrix(ens, ens.eval_points);
  const auto d = solve_decoders(a, ens.eval_points, 0.1);
  const auto oracle = qr_oracle(a, ens.eval_points, 0.1);
  EXPECT_LE((d - oracle).norm(), 1e-9 * oracle.norm());
  EXPECT_LT(identity_rmse(ens, 0.1), 0.05);
}

TEST(SolveDecoders, RegularizedGradientVanishes) {
  const auto ens = make_ensemble(80, 2, 9);
  const auto a = activity_matrix(ens, ens.eval_points);
  Eigen::MatrixXd y(a.rows(), 2);
  y.col(0) = ens.eval_points.col(0).array().square();
  y.col(1) = ens.eval_points.rowwise().prod();
  for (double reg : {0.01, 0.1, 0.5}) {
    const auto d = solve_decoders(a, y, reg);
    const double sigma = reg * a.maxCoeff();
    const Eigen::MatrixXd grad = a.transpose() * (a * d - y) +
                                 sigma * sigma * static_cast<double>(a.rows()) * d;
    EXPECT_LE(grad.norm(), 1e-6 * (a.transpose() * y).norm()) << reg;
  }
}

TEST(SolveDecoders, AccuracyImprovesWithNeuronCount) {
  auto median_rmse = [](int n) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      errs.push_back(identity_rmse(make_ensemble(n, 1, 100 + seed, NeuronModel::RateLIF, 0), 0.1));
    }
    std::nth_element(errs.begin(), errs.begin() + 5, errs.end());
    return errs[5];
  };
  const double e10 = median_rmse(10);
  const double e100 = median_rmse(100);
  const double e1000 = median_rmse(1000);
  EXPECT_LT(e100, e10);
  EXPECT_LT(e1000, e100);
}

TEST(FoldWeights, ScalarCase) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Constant(1, 1, 0.25);
  const Eigen::MatrixXd t = Eigen::MatrixXd::Identity(1, 1);
  const Eigen::MatrixXd e = Eigen::MatrixXd::Constant(1, 1, -1.0);
  EXPECT_DOUBLE_EQ(fold_weights(d, t, &e)(0, 0), -0.25);
}

TEST(FoldWeights, MatchesDecodeTransformEncode) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_src = 5 + trial, n_dst = 3 + trial % 4, k = 1 + trial % 3, m = 1 + trial % 2;
    Eigen::MatrixXd d(n_src, k), t(m, k), e(n_dst, m);
    for (auto* mat : {&d, &t, &e}) {
      for (Eigen::Index i = 0; i < mat->size(); ++i) mat->data()[i] = rng.normal();
    }
    Eigen::VectorXd a(n_src);
    for (auto& x : a) x = rng.uniform(0.0, 300.0);
    const Eigen::VectorXd staged = e * (t * (d.transpose() * a));
    const Eigen::VectorXd folded = fold_weights(d, t, &e) * a;
    EXPECT_LE((staged - folded).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, staged.cwiseAbs().maxCoeff()));
    const Eigen::VectorXd node_staged = t * (d.transpose() * a);
    EXPECT_LE((node_staged - fold_weights(d, t) * a).cwiseAbs().maxCoeff(),
              1e-12 * std::max(1.0, node_staged.cwiseAbs().maxCoeff()));
  }
}

TEST(FoldWeights, ZeroDecodersAndShapeErrors) {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Ones(4, 2);
  EXPECT_TRUE(fold_weights(Eigen::MatrixXd::Zero(6, 2), Eigen::MatrixXd::Identity(2, 2), &e).isZero(0.0));
  EXPECT_THROW(fold_weights(Eigen::MatrixXd::Zero(6, 3), Eigen::MatrixXd::Identity(2, 2)), Error);
}

ModelGraph two_ensemble_controller() {
  ModelGraph g;
  g.add_node({"target", 3, NodeKind::ExternalInput});
  g.add_node({"torque", 2, NodeKind::ExternalOutput});
  Ensemble a;
  a.id = "ens_accel";
  a.n_neurons = 200;
  a.dimensions = 2;
  a.seed = 1;
  Ensemble s = a;
  s.id = "ens_steer";
  s.dimensions = 3;
  s.seed = 2;
  g.add_ensemble(a).add_ensemble(s);
  g.register_function("norm", {[](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, x.norm()); }, 2, 1});
  g.register_function("angle", {[](const Eigen::VectorXd& x) {
                                  return Eigen::VectorXd::Constant(1, std::atan2(-x[0], x[1]) - x[2]);
                                }, 3, 1});
  Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(2, 3);
  slice(0, 0) = slice(1, 1) = 1.0;
  g.connect({.id = "in_accel", .source = "target", .target = "ens_accel", .transform = slice, .synapse = 0.05});
  g.connect({.id = "in_steer", .source = "target", .target = "ens_steer", .synapse = 0.05});
  g.connect({.id = "out_accel", .source = "ens_accel", .target = "torque", .function = "norm",
             .transform = Eigen::Vector2d(0.0, 1.0)});
  g.connect({.id = "out_steer", .source = "ens_steer", .target = "torque", .function = "angle",
             .transform = Eigen::Vector2d(1.0, 0.0)});
  return g;
}

TEST(Compile, LowersEveryConnectionOnce) {
  const auto model = compile(validate_graph(two_ensemble_controller()).value(), Backend::Reference);
  ASSERT_EQ(model.connections.size(), 4u);
  EXPECT_EQ(model.connection("out_accel").weights.rows(), 2);
  EXPECT_EQ(model.connection("out_accel").weights.cols(), 200);
  EXPECT_EQ(model.connection("out_steer").weights.cols(), 200);
  EXPECT_EQ(model.connection("in_accel").weights.rows(), 200);
  EXPECT_EQ(model.connection("in_accel").weights.cols(), 3);
  EXPECT_NEAR(model.connection("in_steer").alpha, 0.980199, 1e-6);
  EXPECT_DOUBLE_EQ(model.connection("in_steer").alpha, std::exp(-0.02));
  EXPECT_EQ(model.connection("out_steer").alpha, 0.0);
}

TEST(Compile, BackendsShareTheBuild) {
  const auto validated = validate_graph(two_ensemble_controller()).value();
  const auto ref = compile(validated, Backend::Reference);
  const auto fixed = compile(validated, Backend::FixedPoint);
  for (std::size_t i = 0; i < ref.ensembles.size(); ++i) {
    EXPECT_EQ(ref.ensembles[i].encoders, fixed.ensembles[i].encoders);
    EXPECT_EQ(ref.ensembles[i].gain_bias.gain, fixed.ensembles[i].gain_bias.gain);
    EXPECT_EQ(ref.ensembles[i].gain_bias.bias, fixed.ensembles[i].gain_bias.bias);
  }
  for (std::size_t c = 0; c < ref.connections.size(); ++c) {
    EXPECT_EQ(ref.connections[c].decoders, fixed.connections[c].decoders);
    EXPECT_EQ(ref.connections[c].weights, fixed.connections[c].weights);
    EXPECT_FALSE(ref.connections[c].quantized.has_value());
    ASSERT_TRUE(fixed.connections[c].quantized.has_value());
    const double half_step = std::ldexp(1.0, fixed.connections[c].quantized->exponent - 1);
    EXPECT_LE((fixed.connections[c].quantized->values - fixed.connections[c].weights).cwiseAbs().maxCoeff(),
              half_step);
  }
}

TEST(Compile, LearnedConnectionsStartAtZero) {
  ModelGraph g;
  Ensemble e;
  e.id = "e";
  e.n_neurons = 40;
  e.dimensions = 2;
  g.add_ensemble(e);
  g.add_node({"err", 3, NodeKind::ExternalInput}).add_node({"out", 3, NodeKind::ExternalOutput});
  g.connect({.id = "learn", .source = "e", .target = "out", .transform = Eigen::MatrixXd::Ones(3, 2),
             .synapse = 0.01, .learning = PESConfig{1e-3, "err"}});
  const auto model = compile(validate_graph(g).value(), Backend::Reference);
  const auto& c = model.connection("learn");
  EXPECT_EQ(c.decoders.rows(), 40);
  EXPECT_EQ(c.decoders.cols(), 3);
  EXPECT_TRUE(c.decoders.isZero(0.0));
  EXPECT_TRUE(c.weights.isZero(0.0));
}

TEST(Compile, SolverErrorsNameTheConnection) {
  ModelGraph g;
  Ensemble e;
  e.id = "e";
  e.n_neurons = 5;
  g.add_ensemble(e);
  g.add_node({"out", 1, NodeKind::ExternalOutput});
  g.register_function("nowhere", {[](const Eigen::VectorXd& x) { return x; }, 1, 1,
                                  [](const Eigen::VectorXd&) { return false; }});
  g.connect({.id = "bad", .source = "e", .target = "out", .function = "nowhere"});
  try {
    compile(validate_graph(g).value(), Backend::Reference);
    FAIL();
  } catch (const Error& err) {
    EXPECT_NE(std::string(err.what()).find("'bad'"), std::string::npos);
  }
}

}  // namespace
}  // namespace snnbot
