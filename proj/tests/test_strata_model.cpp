#include <gtest/gtest.h>

#include <numbers>

#include "stratalloc/ingestion.hpp"
#include "stratalloc/strata_model.hpp"
#include "stratalloc/verification/oracles.hpp"

using namespace stratalloc;

namespace {

SurveyDesign timber() { return load_summary(std::string(STRATALLOC_DATA_DIR) + "/table1.csv"); }

StratumSummary scalar_stratum(long N, double s2, std::optional<double> m4 = {}) {
  StratumSummary s;
  s.id = "1";
  s.population_size = N;
  s.covariance = SymmetricMatrix(1);
  s.covariance(0, 0) = s2;
  if (m4) {
    s.m4_vech = SymmetricMatrix(1);
    (*s.m4_vech)(0, 0) = *m4;
    s.m4_vec = Matrix::Constant(1, 1, *m4);
  }
  return s;
}

std::vector<double> random_allocation(const SurveyDesign& d, Rng& rng) {
  std::vector<double> n;
  for (const auto& s : d.strata) n.push_back(2.0 + static_cast<double>(rng.below(static_cast<std::uint64_t>(s.population_size - 1))));
  return n;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(Weights, Examples) {
  SurveyDesign one;
  one.strata.push_back(scalar_stratum(10, 1.0));
  EXPECT_EQ(weights(one)[0], 1.0);
  SurveyDesign two;
  two.strata = {scalar_stratum(7, 1.0), scalar_stratum(7, 2.0)};
  two.strata[1].id = "2";
  EXPECT_EQ(weights(two)[0], 0.5);
  EXPECT_EQ(weights(two)[1], 0.5);
  const SurveyDesign t = timber();
  EXPECT_EQ(t.population_size(), 559605);
  EXPECT_NEAR(weights(t)[0], 11131.0 / 559605.0, 1e-15);
  EXPECT_NEAR(weights(t)[0], 0.019891, 5e-7);
  EXPECT_NEAR(weights(t).sum(), 1.0, 1e-15);
}

TEST(Validate, ReportsEveryProblem) {
  SurveyDesign d;
  d.strata = {scalar_stratum(1, 1.0), scalar_stratum(10, -1.0)};
  try {
    validate(d);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("duplicate"), std::string::npos);
    EXPECT_NE(msg.find("N_h"), std::string::npos);
    EXPECT_NE(msg.find("positive semidefinite"), std::string::npos);
  }
}

TEST(CovYstHat, CensusIsZero) {
  SurveyDesign d;
  d.strata.push_back(scalar_stratum(10, 3.0));
  const std::vector<double> n{10};
  EXPECT_NEAR(cov_yst_hat(d, n)(0, 0), 0.0, 1e-15);
}

TEST(CovYstHat, PublishedVariancesAtBasalAreaAllocation) {
  const SurveyDesign d = timber();
  const Allocation n{10, 94, 144, 136, 191, 113, 81, 109, 122};
  const SymmetricMatrix c = cov_yst_hat(d, n);
  EXPECT_NEAR(c(0, 0), 5.591, 5.591 * 5e-3);
  EXPECT_NEAR(c(1, 1), 5441.105, 5441.105 * 5e-3);
}

TEST(CovYstHat, MatchesScalarComputation) {
  Rng rng(21);
  const SurveyDesign d = oracle::random_design(2, 2, rng);
  const auto n = random_allocation(d, rng);
  const double N = static_cast<double>(d.population_size());
  const SymmetricMatrix c = cov_yst_hat(d, n);
  for (Index j = 0; j < 2; ++j)
    for (Index k = 0; k < 2; ++k) {
      double v = 0.0;
      for (std::size_t h = 0; h < 2; ++h) {
        const double W = static_cast<double>(d.strata[h].population_size) / N;
        v += W * W * d.strata[h].covariance(j, k) / n[h] - W * d.strata[h].covariance(j, k) / N;
      }
      EXPECT_LT(rel(c(j, k), v), 1e-13);
    }
}

TEST(CovYstHat, RejectsInfeasibleAllocation) {
  const SurveyDesign d = timber();
  std::vector<double> n(9, 50.0);
  n[0] = 1.0;
  EXPECT_THROW(cov_yst_hat(d, n), InfeasibleError);
  n[0] = 20000.0;
  EXPECT_THROW(cov_yst_hat(d, n), InfeasibleError);
  EXPECT_THROW(cov_yst_hat(d, std::vector<double>(3, 5.0)), DimensionError);
}

TEST(ExpectedVechCov, HandArithmetic) {
  SurveyDesign d;
  d.strata.push_back(scalar_stratum(100, 1.0));
  EXPECT_NEAR(expected_vech_cov(d, std::vector<double>{2})[0], 0.98, 1e-15);
  EXPECT_NEAR(trace_expectation(d, std::vector<double>{2}), 0.98, 1e-15);
  EXPECT_NEAR(expected_vech_cov(d, std::vector<double>{100})[0], 0.0, 1e-15);
}

TEST(ExpectedVechCov, EqualAllocationDiagonalMatchesTraceTerms) {
  const SurveyDesign d = timber();
  const std::vector<double> n(9, 111.0);
  const Vector e = expected_vech_cov(d, n);
  const Vector w = weights(d);
  double sum = 0.0;
  for (std::size_t h = 0; h < 9; ++h) {
    sum += trace_expectation_term(d.strata[h], w[static_cast<Index>(h)], static_cast<double>(d.population_size()), 111.0,
                                  std::vector<Index>{0, 1});
  }
  EXPECT_LT(rel(e[vech_index(0, 0, 2)] + e[vech_index(1, 1, 2)], sum), 1e-12);
  EXPECT_LT(rel(trace_expectation(d, n), sum), 1e-12);
}

TEST(TraceExpectation, NearPublishedTotalAtBasalAreaAllocation) {
  const SurveyDesign d = timber();
  const Allocation n{10, 94, 144, 136, 191, 113, 81, 109, 122};
  EXPECT_NEAR(trace_expectation(d, n), 5.591 + 5441.105, 0.02 * (5.591 + 5441.105));
}

TEST(TraceExpectation, EqualsTraceOfExpectedVechCov) {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const SurveyDesign d = oracle::random_design(1 + rng.below(4), 1 + static_cast<Index>(rng.below(4)), rng);
    const auto n = random_allocation(d, rng);
    EXPECT_LT(rel(unvech(expected_vech_cov(d, n), d.characteristics()).trace(), trace_expectation(d, n)), 1e-12);
  }
}

TEST(TraceExpectation, DecreasesInEachStratum) {
  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    const SurveyDesign d = oracle::random_design(1 + rng.below(3), 2, rng);
    auto n = random_allocation(d, rng);
    const std::size_t h = rng.below(d.size());
    if (n[h] >= static_cast<double>(d.strata[h].population_size)) continue;
    const double before = trace_expectation(d, n);
    n[h] += 1.0;
    EXPECT_LT(trace_expectation(d, n), before);
  }
}

TEST(CovVechCov, CensusAndScalarReduction) {
  SurveyDesign d;
  d.strata.push_back(scalar_stratum(20, 2.0, 9.0));
  EXPECT_NEAR(cov_vech_cov(d, std::vector<double>{20})(0, 0), 0.0, 1e-15);
  const std::vector<double> n{5};
  const double a = 1.0 / 5.0 - 1.0 / 20.0;
  const double expected = a * a * 5.0 / 16.0 * (9.0 - 4.0);
  EXPECT_NEAR(cov_vech_cov(d, n)(0, 0), expected, 1e-15);
  EXPECT_NEAR(trace_variance(d, n), expected, 1e-15);
  EXPECT_NEAR(det_model_N(d, n)(0, 0), expected, 1e-15);
}

TEST(CovVechCov, MatchesDoubleSumOracleAndIsPsd) {
  Rng rng(24);
  for (int t = 0; t < 50; ++t) {
    const SurveyDesign d = oracle::random_design(1 + rng.below(3), 2, rng);
    const auto n = random_allocation(d, rng);
    const Matrix lib = cov_vech_cov(d, n).to_dense();
    const Matrix ref = oracle::cov_vech_cov_by_sums(d, n);
    EXPECT_LT((lib - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(min_eigenvalue(cov_vech_cov(d, n)), -1e-10 * lib.norm());
    EXPECT_LT(rel(trace_variance(d, n), oracle::trace_variance_by_sums(d, n)), 1e-12);
    const Vector diag = cov_vech_cov(d, n).to_dense().diagonal();
    EXPECT_LT(rel(diag[vech_index(0, 0, 2)] + diag[vech_index(1, 1, 2)], trace_variance(d, n)), 1e-12);
  }
}

TEST(CovVechCov, RequiresFourthMoments) {
  const SurveyDesign d = timber();
  EXPECT_THROW(cov_vech_cov(d, std::vector<double>(9, 50.0)), MomentInputError);
  EXPECT_THROW(trace_variance(d, std::vector<double>(9, 50.0)), MomentInputError);
}

TEST(TraceVariance, GaussianKurtosis) {
  SurveyDesign d;
  const double sigma2 = 2.5;
  d.strata.push_back(scalar_stratum(40, sigma2, 3.0 * sigma2 * sigma2));
  const std::vector<double> n{8};
  const double a = 1.0 / 8.0 - 1.0 / 40.0;
  EXPECT_NEAR(trace_variance(d, n), a * a * 8.0 / 49.0 * 2.0 * sigma2 * sigma2, 1e-14);
}

TEST(TraceVariance, RejectsInvalidKurtosisKernel) {
  SurveyDesign d;
  d.strata.push_back(scalar_stratum(40, 2.0, 3.0));
  EXPECT_THROW(trace_variance(d, std::vector<double>{8}), MomentInputError);
}

TEST(FourthMoment, Examples) {
  const Matrix constant = Matrix::Constant(5, 2, 3.0);
  EXPECT_EQ(fourth_moment_vech(constant).to_dense(), Matrix::Zero(3, 3));
  EXPECT_EQ(fourth_moment_vec(constant), Matrix::Zero(4, 4));
  Matrix y(2, 1);
  y << -1, 1;
  EXPECT_DOUBLE_EQ(fourth_moment_vech(y)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(fourth_moment_vec(y)(0, 0), 1.0);
  EXPECT_THROW(fourth_moment_vech(Matrix::Zero(1, 2)), DimensionError);
}

TEST(FourthMoment, SandwichIdentityAndKernelPsd) {
  Rng rng(25);
  for (int t = 0; t < 50; ++t) {
    const Index G = 1 + static_cast<Index>(rng.below(3));
    Matrix y(3 + static_cast<Index>(rng.below(30)), G);
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < G; ++j) y(i, j) = rng.normal() * (j + 1);
    const auto dm = duplication(G);
    const Matrix sandwich = dm.Dpinv * fourth_moment_vec(y) * dm.Dpinv.transpose();
    const Matrix direct = fourth_moment_vech(y).to_dense();
    EXPECT_LT((sandwich - direct).cwiseAbs().maxCoeff(), 1e-12 * direct.cwiseAbs().maxCoeff());
    const Matrix v4 = fourth_moment_vec(y);
    EXPECT_EQ(v4, v4.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(v4).eigenvalues().minCoeff(), -1e-10 * v4.norm());
    const Vector vs = vech(population_covariance(y));
    const SymmetricMatrix kernel = SymmetricMatrix::symmetrize(direct - vs * vs.transpose());
    EXPECT_GE(min_eigenvalue(kernel), -1e-10 * direct.norm());
  }
}

TEST(DetModel, SandwichEqualsCovVechCovAndIsSingular) {
  Rng rng(26);
  const SurveyDesign d = oracle::random_design(3, 2, rng);
  const auto n = random_allocation(d, rng);
  const auto dm = duplication(2);
  const Matrix N = det_model_N(d, n);
  const Matrix sandwich = dm.Dpinv * N * dm.Dpinv.transpose();
  const Matrix c = cov_vech_cov(d, n).to_dense();
  EXPECT_LT((sandwich - c).cwiseAbs().maxCoeff(), 1e-12 * c.cwiseAbs().maxCoeff());
  // Columns live in vec of symmetric matrices: rank <= 3 of 4.
  EXPECT_LT(std::abs(N.determinant()), 1e-10 * std::pow(N.norm(), 4));
  const std::vector<double> census{static_cast<double>(d.strata[0].population_size),
                                   static_cast<double>(d.strata[1].population_size),
                                   static_cast<double>(d.strata[2].population_size)};
  SurveyDesign one;
  one.strata.push_back(d.strata[0]);
  EXPECT_LT(det_model_N(one, std::vector<double>{census[0]}).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DetModel, GammaConstants) {
  const auto zero = determinant_moments(0.0);
  EXPECT_EQ(zero.expectation, 0.0);
  EXPECT_EQ(zero.variance, 0.0);
  const auto sixteen = determinant_moments(16.0);
  EXPECT_NEAR(sixteen.expectation, -1.0, 1e-14);
  EXPECT_NEAR(sixteen.variance, 6.0, 1e-13);
  const auto one = determinant_moments(1.0);
  EXPECT_NEAR(one.expectation, -0.5, 1e-15);
  EXPECT_NEAR(one.variance, 1.5, 1e-14);
  const auto negative = determinant_moments(-1e-20);
  EXPECT_TRUE(negative.clamped);
  EXPECT_EQ(negative.expectation, 0.0);
}

TEST(DetModel, RequiresTwoCharacteristics) {
  Rng rng(27);
  const SurveyDesign d = oracle::random_design(2, 3, rng);
  EXPECT_THROW(det_expectation(d, random_allocation(d, rng)), UnsupportedModelError);
}

TEST(DetDensity, ValuesAndMass) {
  EXPECT_NEAR(det_density(0.0), 1.0 / std::numbers::sqrt2, 1e-15);
  EXPECT_LT(det_density(400.0), 1e-3);
  EXPECT_GT(det_density(400.0), 0.0);
  EXPECT_LT(det_density(1e6), 1e-3);
  EXPECT_THROW(det_density(-1.0), DimensionError);
  // Continuity across the asymptotic branch.
  EXPECT_LT(rel(det_density(300.0), det_density(std::nextafter(300.0, 301.0))), 1e-6);
  EXPECT_NEAR(det_density_mass(50.0), 1.0 - 1.0 / std::numbers::sqrt2, 1e-10);
  EXPECT_EQ(det_density_mass(50.0), det_density_mass(50.0));
}

TEST(SummarizePilot, FreezesPilotSize) {
  Matrix y(2, 1);
  y << 0, 2;
  const StratumSummary s = summarize_pilot("p", 10, y);
  EXPECT_EQ(s.pilot_size, 2);
  EXPECT_DOUBLE_EQ(s.covariance(0, 0), 2.0);
  EXPECT_DOUBLE_EQ((*s.m4_vech)(0, 0), 1.0);
}
