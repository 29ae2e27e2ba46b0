#include "amc/model.hpp"
#include "amc/synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace amc {
namespace {

std::vector<std::string> names_of(const ModelParams& m) {
  std::vector<std::string> out;
  for_each_param(m, [&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

void expect_same(const ModelParams& a, const ModelParams& b) {
  EXPECT_EQ(a.shape, b.shape);
  std::vector<Matrix> va, vb;
  for_each_param(a, [&](const std::string&, const Matrix& x) { va.push_back(x); });
  for_each_param(b, [&](const std::string&, const Matrix& x) { vb.push_back(x); });
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) EXPECT_EQ(va[i], vb[i]);
}

TEST(Model, ParameterNamesAreStableAndUnique) {
  const ModelParams m = init_model({6, 4, 2, 1, Activation::prelu, EncoderKind::gcn}, 1);
  const std::vector<std::string> want{
      "gcn.target.0.weight", "gcn.target.0.slope", "gcn.target.1.weight", "gcn.target.1.slope",
      "gcn.aux.0.weight",    "gcn.aux.0.slope",    "head.0.w1",           "head.0.w2",
      "head.1.w1",           "head.1.w2",          "head.2.w1",           "head.2.w2",
      "attention.0.q",       "attention.0.w",      "attention.1.q",       "attention.1.w",
      "attention.2.q",       "attention.2.w",      "attention.bias"};
  EXPECT_EQ(names_of(m), want);
}

TEST(Model, BindCreatesOneLeafPerParameter) {
  const ModelParams m = init_model({6, 4, 2, 2, Activation::relu, EncoderKind::gcn}, 2);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  EXPECT_EQ(vars.leaves.size(), names_of(m).size());
  std::size_t entries = 0;
  for (const ad::Var& v : vars.leaves) {
    EXPECT_TRUE(v.requires_grad());
    entries += static_cast<std::size_t>(v.value().size());
  }
  EXPECT_EQ(entries, parameter_count(m));
}

TEST(Model, InitIsSeeded) {
  const EncoderShape s{6, 4, 2, 2, Activation::relu, EncoderKind::gcn};
  expect_same(init_model(s, 5), init_model(s, 5));
  EXPECT_NE(init_model(s, 5).encoder.target[0], init_model(s, 6).encoder.target[0]);
}

class ModelFile : public ::testing::TestWithParam<EncoderShape> {};

TEST_P(ModelFile, RoundTripsExactly) {
  const ModelParams m = init_model(GetParam(), 7);
  test::TempDir dir("model");
  save_model(m, dir / "m.amcg");
  const ModelParams back = load_model(dir / "m.amcg");
  expect_same(m, back);
  save_model(back, dir / "again.amcg");
  EXPECT_EQ(test::read_file(dir / "m.amcg"), test::read_file(dir / "again.amcg"));
}

INSTANTIATE_TEST_SUITE_P(Shapes, ModelFile,
                         ::testing::Values(EncoderShape{6, 4, 2, 2, Activation::relu, EncoderKind::gcn},
                                           EncoderShape{5, 3, 1, 0, Activation::prelu, EncoderKind::gcn},
                                           EncoderShape{4, 8, 3, 1, Activation::relu, EncoderKind::sage}));

TEST(ModelFile, HeaderLayout) {
  const ModelParams m = init_model({3, 2, 1, 0, Activation::relu, EncoderKind::gcn}, 8);
  test::TempDir dir("layout");
  save_model(m, dir / "m.amcg");
  const std::string bytes = test::read_file(dir / "m.amcg");
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 4), "AMCG");
  std::uint32_t version = 0, count = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&count, bytes.data() + 8, 4);
  EXPECT_EQ(version, kModelFormatVersion);
  EXPECT_EQ(count, names_of(m).size());
}

class CorruptModel : public ::testing::Test {
 protected:
  void SetUp() override {
    save_model(init_model({3, 2, 1, 1, Activation::relu, EncoderKind::gcn}, 9), dir / "m.amcg");
    bytes = test::read_file(dir / "m.amcg");
  }
  std::string load_error(const std::string& content) {
    test::write_file(dir / "bad.amcg", content);
    try {
      load_model(dir / "bad.amcg");
    } catch (const DatasetError& e) {
      return e.what();
    }
    return "";
  }
  test::TempDir dir{"corrupt"};
  std::string bytes;
};

TEST_F(CorruptModel, BadMagic) {
  std::string b = bytes;
  b[0] = 'X';
  EXPECT_NE(load_error(b).find("bad magic"), std::string::npos);
}

TEST_F(CorruptModel, WrongVersion) {
  std::string b = bytes;
  b[4] = 9;
  EXPECT_NE(load_error(b).find("version"), std::string::npos);
}

TEST_F(CorruptModel, Truncated) {
  EXPECT_NE(load_error(bytes.substr(0, bytes.size() - 5)).find("end of file"), std::string::npos);
}

TEST_F(CorruptModel, MissingFile) {
  EXPECT_THROW(load_model(dir / "absent.amcg"), DatasetError);
}

TEST(Model, EmbedIsTargetStageOutput) {
  const Dataset d = random_dataset(20, 6, 2, 0.2, 10);
  const ModelParams m = init_model({6, 4, 2, 2, Activation::relu, EncoderKind::gcn}, 11);
  const Matrix emb = embed(m, d.graph, d.features);
  ASSERT_EQ(emb.rows(), 20);
  ASSERT_EQ(emb.cols(), 4);
  const Matrix a = normalize_adjacency(d.graph).matrix.to_dense();
  const Matrix h1 = (a * d.features * m.encoder.target[0]).cwiseMax(0.0);
  const Matrix h2 = (a * h1 * m.encoder.target[1]).cwiseMax(0.0);
  EXPECT_LT((emb - h2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(embed(m, d.graph, Matrix::Ones(20, 5)), DimensionError);
}

}  // namespace
}  // namespace amc
