// tests/autodiff_test.cpp
//
// Copyright 2026 The auxsup Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "auxsup/autodiff.hpp"

#include <gtest/gtest.h>

#include "auxsup/checkpoint.hpp"
#include "auxsup/rng.hpp"

namespace auxsup {
namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

TEST(TensorTest, ShapeAndAccess) {
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  t(1, 2) = 5.0;
  EXPECT_DOUBLE_EQ(t[5], 5.0);
  EXPECT_THROW(Tensor({1, 2, 3, 4}), std::invalid_argument);
}

TEST(OpsTest, SoftmaxOfConstantVectorIsUniform) {
  for (std::size_t v : {2u, 5u, 17u}) {
    Tape tape;
    Tensor x({v});
    x.fill(3.25);
    Var y = softmax(tape.constant(x));
    for (std::size_t i = 0; i < v; ++i)
      EXPECT_NEAR(y.value()[i], 1.0 / static_cast<double>(v), 1e-15);
  }
}

TEST(OpsTest, SoftmaxRowsSumToOne) {
  Rng rng(7);
  Tape tape;
  Var y = softmax(tape.constant(random_tensor({6, 9}, rng, 4.0)));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) s += y.value()(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(OpsTest, LogSoftmaxMatchesSoftmax) {
  Rng rng(8);
  Tape tape;
  Tensor x = random_tensor({4, 5}, rng, 3.0);
  Var ls = log_softmax(tape.constant(x));
  Var s = softmax(tape.constant(x));
  for (std::size_t i = 0; i < x.numel(); ++i)
    EXPECT_NEAR(std::exp(ls.value()[i]), s.value()[i], 1e-12);
}

TEST(OpsTest, TimeMaxPoolRaggedTail) {
  Tape tape;
  Tensor x({5, 2});
  for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i);
  Var y = time_max_pool(tape.constant(x), 2);
  ASSERT_EQ(y.value().rows(), 3u);  // ceil(5/2)
  EXPECT_DOUBLE_EQ(y.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y.value()(1, 1), 7.0);
  EXPECT_DOUBLE_EQ(y.value()(2, 0), 8.0);  // tail window of one row
}

TEST(OpsTest, DropoutRateZeroIsIdentity) {
  Rng data_rng(3), drop_rng(4);
  Tape tape;
  Tensor x = random_tensor({3, 4}, data_rng);
  Var in = tape.constant(x);
  Var out = dropout(in, 0.0, drop_rng);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(out.value()[i], x[i]);
}

TEST(OpsTest, DropoutDeterministicGivenSeed) {
  Rng data_rng(3);
  Tensor x = random_tensor({8, 8}, data_rng);
  Tensor out1, out2;
  for (Tensor* dst : {&out1, &out2}) {
    Rng drop_rng(99);
    Tape tape;
    *dst = dropout(tape.constant(x), 0.4, drop_rng).value();
  }
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out1[i], out2[i]);
}

TEST(OpsTest, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4,5)"), std::string::npos) << msg;
  }
}

TEST(BackwardTest, SumOfSquaresGradient) {
  ParameterStore params;
  auto p = params.create("x", Tensor::scalar(3.0));
  Tape tape;
  Var x = tape.param(p);
  Var loss = sum(mul(x, x));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(loss.value()[0], 9.0);
  EXPECT_DOUBLE_EQ(p->grad[0], 6.0);
}

TEST(BackwardTest, UntouchedParameterGetsZeroGradient) {
  ParameterStore params;
  auto p = params.create("used", Tensor::scalar(2.0));
  auto q = params.create("unused", Tensor::scalar(5.0));
  Tape tape;
  Var x = tape.param(p);
  tape.param(q);  // on the tape but not in the loss
  tape.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(p->grad[0], 4.0);
  EXPECT_DOUBLE_EQ(q->grad[0], 0.0);
}

TEST(BackwardTest, ReusedNodeAccumulatesBothPaths) {
  ParameterStore params;
  auto p = params.create("x", Tensor::scalar(3.0));
  Tape tape;
  Var x = tape.param(p);
  // loss = x*x + 2x  ->  d/dx = 2x + 2 = 8
  Var loss = add(sum(mul(x, x)), sum(scale(x, 2.0)));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(p->grad[0], 8.0);
}

TEST(BackwardTest, NonScalarLossRejected) {
  Tape tape;
  Var v = tape.constant(Tensor({2, 2}));
  EXPECT_THROW(tape.backward(v), std::invalid_argument);
}

TEST(GradCheckTest, QuadraticLossIsExact) {
  ParameterStore params;
  Rng rng(11);
  auto p = params.create("w", random_tensor({3, 4}, rng));
  auto report = grad_check(
      params, [&](Tape& t) { return sum(mul(t.param(p), t.param(p))); }, 1e-5);
  EXPECT_LT(report.max_rel_err, 1e-9);
}

// Every differentiable op in isolation, composed to a scalar through sum.
TEST(GradCheckTest, EveryOpInIsolation) {
  Rng rng(21);
  const double kTol = 1e-6;

  struct Case {
    const char* name;
    std::function<Var(Tape&, ParameterStore&)> build;
  };

  ParameterStore params;
  auto a = params.create("a", random_tensor({3, 4}, rng));
  auto b = params.create("b", random_tensor({4, 5}, rng));
  auto c = params.create("c", random_tensor({3, 4}, rng));
  auto v = params.create("v", random_tensor({4}, rng));
  auto s = params.create("s", random_tensor({6, 4}, rng));

  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, ParameterStore&) { return sum(matmul(t.param(a), t.param(b))); }},
      {"add", [&](Tape& t, ParameterStore&) { return sum(add(t.param(a), t.param(c))); }},
      {"add_rowvec", [&](Tape& t, ParameterStore&) { return sum(add(t.param(a), t.param(v))); }},
      {"mul", [&](Tape& t, ParameterStore&) { return sum(mul(t.param(a), t.param(c))); }},
      {"scale", [&](Tape& t, ParameterStore&) { return sum(scale(t.param(a), -1.7)); }},
      {"sigmoid", [&](Tape& t, ParameterStore&) { return sum(sigmoid(t.param(a))); }},
      {"tanh", [&](Tape& t, ParameterStore&) { return sum(tanh_op(t.param(a))); }},
      {"relu", [&](Tape& t, ParameterStore&) { return sum(relu(t.param(a))); }},
      {"softmax", [&](Tape& t, ParameterStore&) { return sum(mul(softmax(t.param(a)), t.param(c))); }},
      {"log_softmax",
       [&](Tape& t, ParameterStore&) { return sum(mul(log_softmax(t.param(a)), t.param(c))); }},
      {"concat0",
       [&](Tape& t, ParameterStore&) { return sum(concat({t.param(a), t.param(c)}, 0)); }},
      {"concat1",
       [&](Tape& t, ParameterStore&) { return sum(mul(concat({t.param(a), t.param(a)}, 1),
                                                      concat({t.param(c), t.param(c)}, 1))); }},
      {"slice_rows",
       [&](Tape& t, ParameterStore&) { return sum(slice_rows(t.param(s), 1, 4)); }},
      {"slice_cols",
       [&](Tape& t, ParameterStore&) { return sum(slice_cols(t.param(s), 1, 3)); }},
      {"transpose",
       [&](Tape& t, ParameterStore&) { return sum(matmul(transpose(t.param(a)), t.param(c))); }},
      {"time_max_pool",
       [&](Tape& t, ParameterStore&) { return sum(time_max_pool(t.param(s), 4)); }},
      {"dropout",
       [&](Tape& t, ParameterStore&) {
         Rng drop_rng(1234);  // fixed seed keeps the builder deterministic
         return sum(dropout(t.param(s), 0.3, drop_rng));
       }},
      {"sum_of_mean", [&](Tape& t, ParameterStore&) { return mean(t.param(s)); }},
  };

  for (auto& tc : cases) {
    auto report = grad_check(
        params, [&](Tape& t) { return tc.build(t, params); }, 1e-5);
    EXPECT_LT(report.max_rel_err, kTol)
        << tc.name << " worst at " << report.worst_param << "[" << report.worst_index << "]";
  }
}

TEST(GradCheckTest, ForwardDeterminism) {
  Rng rng(31);
  Tensor x = random_tensor({5, 5}, rng, 2.0);
  Tensor y1, y2;
  for (Tensor* dst : {&y1, &y2}) {
    Tape tape;
    Var in = tape.constant(x);
    *dst = log_softmax(matmul(sigmoid(in), tanh_op(in))).value();
  }
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1[i], y2[i]);
}

TEST(ParameterStoreTest, DuplicateNameRejected) {
  ParameterStore params;
  params.create("w", Tensor::scalar(1.0));
  EXPECT_THROW(params.create("w", Tensor::scalar(2.0)), std::invalid_argument);
}

TEST(ParameterStoreTest, StableEnumerationOrder) {
  ParameterStore params;
  params.create("z", Tensor::scalar(1.0));
  params.create("a", Tensor::scalar(2.0));
  params.create("m", Tensor::scalar(3.0));
  ASSERT_EQ(params.all().size(), 3u);
  EXPECT_EQ(params.all()[0]->name, "z");
  EXPECT_EQ(params.all()[1]->name, "a");
  EXPECT_EQ(params.all()[2]->name, "m");
}

TEST(CheckpointTest, SaveLoadRoundTripIsBitExact) {
  Rng rng(41);
  ParameterStore src;
  src.create("enc.w", random_tensor({4, 7}, rng));
  src.create("enc.b", random_tensor({7}, rng));
  src.create("dec.w", random_tensor({2, 3}, rng));
  const std::string path = ::testing::TempDir() + "/ckpt_roundtrip.auxp";
  save_parameters(path, src);

  ParameterStore dst;
  dst.create("enc.w", Tensor({4, 7}));
  dst.create("enc.b", Tensor({7}));
  dst.create("dec.w", Tensor({2, 3}));
  load_parameters(path, dst);
  for (std::size_t pi = 0; pi < src.all().size(); ++pi) {
    const auto& sp = src.all()[pi];
    const auto& dp = dst.all()[pi];
    for (std::size_t i = 0; i < sp->value.numel(); ++i)
      EXPECT_EQ(sp->value[i], dp->value[i]) << sp->name;
  }
}

TEST(CheckpointTest, MismatchedShapeRejected) {
  Rng rng(42);
  ParameterStore src;
  src.create("w", random_tensor({2, 2}, rng));
  const std::string path = ::testing::TempDir() + "/ckpt_mismatch.auxp";
  save_parameters(path, src);

  ParameterStore dst;
  dst.create("w", Tensor({3, 3}));
  EXPECT_THROW(load_parameters(path, dst), std::runtime_error);
}

}  // namespace
}  // namespace auxsup
