#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "scratch.hpp"
#include "tupre/io.hpp"

using namespace tupre;

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = unit(rng) * std::pow(10.0, 40.0 * unit(rng));
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(CsvTable, Format) {
  CsvTable t({"k", "alpha", "flag", "name"});
  t.add(10, 0.5, true, "upre");
  t.add(Index{20}, 0.25, false, std::string("gcv"));
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.str(), "k,alpha,flag,name\n10,0.5,1,upre\n20,0.25,0,gcv\n");
  t.set_preamble("# note\n");
  EXPECT_EQ(t.str().rfind("# note\nk,alpha", 0), 0u);
  EXPECT_THROW(t.add(1, 2.0), InputError);
}

TEST(F64, LittleEndianRoundTrip) {
  const auto dir = scratch_dir();
  const std::vector<double> v{1.0, -2.5, 1e-300, std::numeric_limits<double>::infinity()};
  write_f64(dir / "v.f64", v.data(), v.size());
  EXPECT_EQ(fs::file_size(dir / "v.f64"), 32u);
  std::ifstream in(dir / "v.f64", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(bytes[7], 0x3F);
  EXPECT_EQ(bytes[6], 0xF0);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(bytes[i], 0);
  EXPECT_EQ(read_f64(dir / "v.f64"), v);
  EXPECT_THROW(read_f64(dir / "missing.f64"), IoError);
  write_text_file(dir / "odd.f64", "abc");
  EXPECT_THROW(read_f64(dir / "odd.f64"), IoError);
}

TEST(SaveArray, MatrixAndVectorShapes) {
  const auto dir = scratch_dir();
  Matrix M(3, 2);
  M << 1, 2, 3, 4, 5, 6;
  const auto dm = save_array(dir, "M", M);
  EXPECT_EQ(dm.at("shape"), json::array({3, 2}));
  EXPECT_EQ(load_array(dir, dm), M);
  const Vector v = Vector::LinSpaced(5, 0.0, 1.0);
  const auto dv = save_array(dir, "v", v);
  EXPECT_EQ(dv.at("shape"), json::array({5}));
  EXPECT_EQ(load_array(dir, dv).col(0), v);
  json bad = dv;
  bad["shape"] = json::array({6});
  EXPECT_THROW(load_array(dir, bad), IoError);
}

TEST(SaveInstance, DenseModelProblem) {
  const auto dir = scratch_dir();
  const auto inst = generate_model_problem({DecayKind::moderate, 1.5}, 32, 0.5, 0.05, 3);
  save_instance(dir, inst, {{"model", "moderate"}, {"n", 32}});
  const auto meta = load_instance_metadata(dir);
  EXPECT_EQ(meta.at("basis"), "dense");
  EXPECT_EQ(meta.at("model"), "moderate");
  EXPECT_EQ(meta.at("l_true").get<Index>(), inst.l_true);
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 3u);
  EXPECT_EQ(meta.at("noise_sigma").get<double>(), 0.05);
  const auto& arrays = meta.at("arrays");
  EXPECT_EQ(load_array(dir, arrays.at("b")).col(0), inst.b);
  EXPECT_EQ(load_array(dir, arrays.at("x_true")).col(0), inst.x_true);
  EXPECT_EQ(load_array(dir, arrays.at("U")), inst.system.U());
  EXPECT_EQ(load_array(dir, arrays.at("V")), inst.system.V());
  EXPECT_EQ(load_array(dir, arrays.at("sigma")).col(0), inst.system.sigma());
}

TEST(SaveInstance, CanonicalAndBlurProblems) {
  const auto dir = scratch_dir();
  const auto canon = generate_model_problem_canonical({DecayKind::severe, 1.5}, 32, 0.5, 0.01, 4);
  save_instance(dir / "canon", canon);
  auto meta = load_instance_metadata(dir / "canon");
  EXPECT_EQ(meta.at("basis"), "canonical");
  EXPECT_FALSE(meta.at("arrays").contains("U"));

  const auto blur = generate_blur_problem(16, 1.0, 0.01, 5);
  save_instance(dir / "blur", blur);
  meta = load_instance_metadata(dir / "blur");
  EXPECT_EQ(meta.at("basis"), "kronecker");
  EXPECT_EQ(meta.at("n_side").get<Index>(), 16);
  EXPECT_EQ(load_array(dir / "blur", meta.at("arrays").at("A_left")), blur.blur.A_left);
  EXPECT_EQ(load_array(dir / "blur", meta.at("arrays").at("psf_1d")).col(0), blur.blur.psf_1d);
}

TEST(Io, Errors) {
  const auto dir = scratch_dir();
  EXPECT_THROW(read_text_file(dir / "nope.txt"), IoError);
  EXPECT_THROW(load_instance_metadata(dir), IoError);
  write_text_file(dir / "instance.json", "{not json");
  EXPECT_THROW(load_instance_metadata(dir), IoError);
  write_text_file(dir / "file", "x");
  EXPECT_THROW(ensure_directory(dir / "file" / "sub"), IoError);
}
