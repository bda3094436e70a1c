#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "oscilla/config.hpp"
#include "oscilla/io.hpp"

using namespace oscilla;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(config, defaults_materialized) {
  Config cfg;
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "lambda"), 46.0);
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "varpi"), 1.0);
  EXPECT_EQ(cfg.get_int("mesh", "n_theta"), 96);
  EXPECT_EQ(cfg.get_string("output", "dir"), "out");
  EXPECT_TRUE(cfg.has("branch", "epsilon_max"));
  EXPECT_FALSE(cfg.has("branch", "no_such_key"));
}

TEST(config, parse_overrides_and_comments) {
  Config cfg = Config::parse_text(
      "# leading comment\n"
      "[model]\n"
      "lambda = 30.5   # trailing comment\n"
      "varpi = 0.25\n"
      "; alternate comment marker\n"
      "[steady]\n"
      "tol = 1e-9\n");
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "lambda"), 30.5);
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "varpi"), 0.25);
  EXPECT_DOUBLE_EQ(cfg.get_double("steady", "tol"), 1e-9);
  // untouched keys keep their defaults
  EXPECT_EQ(cfg.get_int("modes", "kmax"), 8);
}

TEST(config, rejects_unknown_sections_and_keys_by_name) {
  try {
    Config::parse_text("[model]\nlambada = 3\n");
    FAIL() << "unknown key accepted";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("lambada"), std::string::npos);
  }
  try {
    Config::parse_text("[mdoel]\nlambda = 3\n");
    FAIL() << "unknown section accepted";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("mdoel"), std::string::npos);
  }
  EXPECT_THROW(Config::parse_text("lambda = 3\n"), validation_error);  // key before section
  EXPECT_THROW(Config::parse_text("[model]\nlambda\n"), validation_error);
}

TEST(config, set_validates_against_registry) {
  Config cfg;
  cfg.set("model", "lambda", "12.5");
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "lambda"), 12.5);
  EXPECT_THROW(cfg.set("model", "bogus", "1"), validation_error);
  EXPECT_THROW(cfg.set("nope", "lambda", "1"), validation_error);
}

TEST(config, effective_text_is_a_reparse_fixed_point) {
  Config cfg = Config::parse_text("[model]\nlambda = 33\n[output]\nseed = 77\n");
  std::string text = cfg.effective_text();
  Config again = Config::parse_text(text);
  EXPECT_EQ(again.effective_text(), text);
  EXPECT_DOUBLE_EQ(again.get_double("model", "lambda"), 33.0);
  EXPECT_EQ(again.get_int("output", "seed"), 77);
}

TEST(config, parse_file_round_trip) {
  std::string path = temp_path("oscilla_cfg_test.cfg");
  atomic_write_text(path, "[model]\nlambda = 21\n");
  Config cfg = Config::parse_file(path);
  EXPECT_DOUBLE_EQ(cfg.get_double("model", "lambda"), 21.0);
  std::filesystem::remove(path);
  EXPECT_THROW(Config::parse_file(path), validation_error);
}

TEST(config, model_helpers_translate_sections) {
  Config cfg = Config::parse_text(
      "[model]\nlambda = 40\nvarpi = 0.5\na11 = 4\na12 = 1\na22 = 9\n"
      "[mesh]\nr_trunc = 12\nn_theta = 20\n");
  ModelParams m = model_params_from(cfg);
  EXPECT_DOUBLE_EQ(m.lambda, 40.0);
  EXPECT_DOUBLE_EQ(m.varpi, 0.5);
  EXPECT_DOUBLE_EQ(m.A(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(m.A(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.A(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.A(1, 1), 9.0);

  MeshOptions mo = mesh_options_from(cfg);
  EXPECT_DOUBLE_EQ(mo.R_trunc, 12.0);
  EXPECT_EQ(mo.n_theta, 20);

  BodyGeometry g = body_geometry_from(cfg);
  EXPECT_EQ(g.kind, BodyGeometry::Kind::circle);
  EXPECT_DOUBLE_EQ(g.diameter, 1.0);
}

TEST(config, positive_omega_overrides_stiffness) {
  Config cfg = Config::parse_text("[model]\nomega = 3\na11 = 77\n");
  ModelParams m = model_params_from(cfg);
  EXPECT_DOUBLE_EQ(m.A(0, 0), 9.0);  // A = omega^2 I
  EXPECT_DOUBLE_EQ(m.A(1, 1), 9.0);
  EXPECT_DOUBLE_EQ(m.A(0, 1), 0.0);
}

TEST(io, format_float_is_deterministic_and_round_trips) {
  EXPECT_EQ(format_float(1.0), format_float(1.0));
  for (double x : {0.1, -3.25e-17, 12345.6789, 6.02214076e23, 0.0}) {
    std::string s = format_float(x);
    EXPECT_EQ(std::stod(s), x);  // 17 significant digits: exact round trip
  }
}

TEST(io, checksum_matches_fnv1a_reference_vectors) {
  // Standard FNV-1a 64-bit test vectors.
  EXPECT_EQ(content_checksum_hex(""), "cbf29ce484222325");
  EXPECT_EQ(content_checksum_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(content_checksum_hex("foobar"), "85944171f73967e8");
}

TEST(io, write_csv_byte_identical_across_runs) {
  std::vector<std::string> header = {"x", "y"};
  std::vector<std::vector<double>> rows = {{1.0, 2.5}, {-3.125e-7, 4e22}};
  std::string p1 = temp_path("oscilla_csv_a.csv");
  std::string p2 = temp_path("oscilla_csv_b.csv");
  write_csv(p1, header, rows);
  write_csv(p2, header, rows);
  std::string c1 = read_text_file(p1);
  EXPECT_EQ(c1, read_text_file(p2));
  EXPECT_EQ(c1.substr(0, 4), "x,y\n");
  EXPECT_EQ(content_checksum_hex(c1), content_checksum_hex(read_text_file(p2)));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);

  EXPECT_THROW(write_csv(p1, header, {{1.0}}), validation_error);  // width mismatch
}

TEST(io, atomic_write_and_directories) {
  std::string dir = temp_path("oscilla_io_test_dir/nested");
  ensure_directory(dir);
  EXPECT_TRUE(std::filesystem::is_directory(dir));
  std::string path = dir + "/file.txt";
  atomic_write_text(path, "payload");
  EXPECT_EQ(read_text_file(path), "payload");
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));  // temp renamed away
  std::filesystem::remove_all(temp_path("oscilla_io_test_dir"));
}
