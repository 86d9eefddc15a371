#include "adaptive_lqr/ensemble_io.h"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "test_fleets.h"

namespace adaptive_lqr {
namespace {

using nlohmann::json;

GTEST_TEST(EnsembleIoTest, RoundTrip) {
  const RegimeEnsemble e = test::MixedDimensionFleet();
  const RegimeEnsemble back = EnsembleFromJson(EnsembleToJson(e));
  ASSERT_EQ(back.size(), e.size());
  for (std::size_t j = 0; j < e.size(); ++j) {
    EXPECT_EQ(back.regimes[j].A, e.regimes[j].A);
    EXPECT_EQ(back.regimes[j].G, e.regimes[j].G);
    EXPECT_EQ(back.x0[j], e.x0[j]);
  }
  EXPECT_EQ(back.prior, e.prior);
}

GTEST_TEST(EnsembleIoTest, ScalarShorthand) {
  const json j = json::parse(R"({"regimes":[{"A":0,"B":1,"C":1,"G":1}],
                                 "prior":[1],"x0":[[2]]})");
  const RegimeEnsemble e = EnsembleFromJson(j);
  EXPECT_EQ(e.regimes[0].B(0, 0), 1.0);
  EXPECT_EQ(e.x0[0][0], 2.0);
}

GTEST_TEST(EnsembleIoTest, SchemaErrors) {
  EXPECT_THROW(EnsembleFromJson(json::parse(R"({"regimes":[]})")),
               ValidationError);
  EXPECT_THROW(EnsembleFromJson(json::parse(
                   R"({"regimes":[{"A":[[0,1],[2]],"B":1,"C":1,"G":1}],
                       "prior":[1],"x0":[[1]]})")),
               ValidationError);
  EXPECT_THROW(
      EnsembleFromJson(json::parse(R"({"regimes":[{"A":0,"B":1,"C":1}],
                                       "prior":[1],"x0":[[1]]})")),
      ValidationError);
  EXPECT_THROW(MatrixFromJson(json::parse(R"([["a"]])"), "M"),
               ValidationError);
}

GTEST_TEST(EnsembleIoTest, Files) {
  const auto path =
      std::filesystem::temp_directory_path() / "adaptive_lqr_io_test.json";
  {
    std::ofstream out(path);
    out << EnsembleToJson(test::ExactCeFleet()).dump();
  }
  EXPECT_EQ(LoadEnsemble(path).size(), 2u);
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(LoadEnsemble(path), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(LoadEnsemble(path), ValidationError);
}

}  // namespace
}  // namespace adaptive_lqr
