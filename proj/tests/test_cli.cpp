#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "schurball/io.hpp"
#include "schurball/sampling.hpp"

using namespace schurball;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(SCHURBALL_CLI_PATH) + " " + args +
                    " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("schurball_cli_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_json(const std::filesystem::path& p, const Json& j) {
  std::ofstream(p) << j.dump(2);
  return p.string();
}

RowContraction planted_source(Rng& rng, int d, Index n, double target) {
  Matrix row = rng.contraction(n, d * n, target);
  std::vector<Matrix> blocks;
  for (int k = 0; k < d; ++k) blocks.push_back(row.middleCols(k * n, n));
  return make_row_contraction(d, blocks);
}

}  // namespace

TEST_CASE("reports are byte-identical across repeated runs") {
  auto r1 = run_cli("example spherical --lambda 1,0");
  auto r2 = run_cli("example spherical --lambda 1,0");
  CHECK(r1.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(!r1.out.empty());

  auto dir = scratch_dir();
  Rng rng(7);
  auto file = write_json(
      dir / "uc.json",
      colligation_to_json(colligation_from_u(2, 1, 2, 1, rng.unitary(3))));
  std::string args = "agler verify --file " + file + " --samples 60 --seed 7";
  auto a1 = run_cli(args);
  auto a2 = run_cli(args);
  CHECK(a1.code == 0);
  CHECK(a1.out == a2.out);
}

TEST_CASE("spherical example pins the origin kernel and classification") {
  auto r = run_cli("example spherical --lambda 1,0");
  REQUIRE(r.code == 0);
  Json rep = Json::parse(r.out);
  Matrix k0 = matrix_from_json(rep.at("kernel_origin"), "report");
  Matrix want(2, 2);
  want << Complex(0), Complex(0), Complex(0), Complex(1);
  CHECK((k0 - want).norm() < 1e-12);
  CHECK(rep.at("classification").at("cnc") == false);
  CHECK(rep.at("classification").at("strongly_cc") == true);
  CHECK(rep.at("classification").at("cc") == true);
  CHECK(rep.at("closed_form_residual").get<double>() < 1e-10);
  CHECK(rep.at("polynomial_identity_residual").get<double>() < 1e-12);
}

TEST_CASE("charfunc matches the scalar Moebius value") {
  auto dir = scratch_dir();
  Matrix m(1, 1);
  m(0, 0) = 0.6;
  auto file = write_json(
      dir / "t06.json",
      row_contraction_to_json(make_row_contraction(1, {m})));
  auto r = run_cli("rowc charfunc --file " + file + " --points 0.5");
  REQUIRE(r.code == 0);
  Json rep = Json::parse(r.out);
  Matrix v = matrix_from_json(rep.at("values")[0].at("value"), "report");
  CHECK(std::abs(v(0, 0) - Complex(-1.0 / 7.0)) < 1e-12);
}

TEST_CASE("verification failures exit 1") {
  auto dir = scratch_dir();
  Rng rng(11);
  auto strict = write_json(
      dir / "sc.json",
      colligation_to_json(
          colligation_from_u(2, 1, 2, 1, rng.contraction(3, 3, 0.8))));
  auto r = run_cli("agler verify --file " + strict + " --samples 40 --seed 3");
  CHECK(r.code == 1);
  Json rep = Json::parse(r.out);
  CHECK(rep.at("pass") == false);
  CHECK(rep.at("residuals").at("max_kernel").get<double>() > 1e-9);
}

TEST_CASE("input and usage errors exit 2") {
  auto dir = scratch_dir();
  std::ofstream(dir / "bad.json") << "{\"d\": 1";
  auto r = run_cli("rowc classify --file " + (dir / "bad.json").string());
  CHECK(r.code == 2);
  auto missing = run_cli("rowc classify --file " +
                         (dir / "definitely_absent.json").string());
  CHECK(missing.code == 2);
  auto usage = run_cli("rowc classify");
  CHECK(usage.code == 2);
  auto sphere = run_cli("example spherical --lambda 1,1");
  CHECK(sphere.code == 2);
  Json truncated;
  truncated["d"] = 1;
  truncated["n"] = 2;
  truncated["T"] = Json::array(
      {Json{{"rows", 2}, {"cols", 2}, {"data", Json::array()}}});
  auto shape = write_json(dir / "shape.json", truncated);
  auto r2 = run_cli("rowc classify --file " + shape);
  CHECK(r2.code == 2);
}

TEST_CASE("report matrices round-trip through the file schema") {
  auto dir = scratch_dir();
  Rng rng(21);
  auto t = planted_source(rng, 2, 2, 0.85);
  Matrix q = rng.unitary(2);
  std::vector<Matrix> rb;
  for (const auto& b : t.t) rb.push_back(q * b * q.adjoint());
  auto ra = write_json(dir / "ta.json", row_contraction_to_json(t));
  auto rbf = write_json(dir / "tb.json",
                        row_contraction_to_json(make_row_contraction(2, rb)));
  auto r = run_cli("rowc equiv --a " + ra + " --b " + rbf);
  REQUIRE(r.code == 0);
  Json rep = Json::parse(r.out);
  REQUIRE(rep.at("equivalent") == true);
  Matrix w = matrix_from_json(rep.at("witness"), "report");
  CHECK((w * w.adjoint() - identity(2)).norm() < 1e-8);
  Matrix again =
      matrix_from_json(Json::parse(matrix_to_json(w).dump()), "copy");
  CHECK((again - w).norm() == 0.0);
  CHECK(rep.at("certificate_residual").get<double>() < 1e-8);
}

TEST_CASE("triple-equiv distinguishes planted from perturbed pairs") {
  auto dir = scratch_dir();
  Rng rng(77);
  auto t = planted_source(rng, 2, 2, 0.85);
  Matrix q = rng.unitary(2);
  std::vector<Matrix> rb;
  for (const auto& b : t.t) rb.push_back(q * b * q.adjoint());
  auto ta = write_json(dir / "qa.json", row_contraction_to_json(t));
  auto tb = write_json(dir / "qb.json",
                       row_contraction_to_json(make_row_contraction(2, rb)));
  std::vector<Matrix> pb = rb;
  pb[0](0, 1) += 0.15;
  auto tp = write_json(dir / "qp.json",
                       row_contraction_to_json(make_row_contraction(2, pb)));
  auto good = run_cli("rowc triple-equiv --a " + ta + " --b " + tb);
  CHECK(good.code == 0);
  CHECK(Json::parse(good.out).at("equivalent") == true);
  auto bad = run_cli("rowc triple-equiv --a " + ta + " --b " + tp);
  CHECK(bad.code == 1);
  CHECK(Json::parse(bad.out).at("equivalent") == false);
}

TEST_CASE("points parse inline complex syntax and JSON files") {
  auto dir = scratch_dir();
  Rng rng(5);
  auto file = write_json(
      dir / "u1.json",
      colligation_to_json(colligation_from_u(2, 1, 2, 1, rng.unitary(3))));
  auto inl =
      run_cli("realize eval --file " + file + " --points \"0.1+0.2i,0.3;0,-0.4i\"");
  REQUIRE(inl.code == 0);
  Json rep = Json::parse(inl.out);
  REQUIRE(rep.at("values").size() == 2);
  CHECK(rep.at("values")[0].at("point")[0][1].get<double>() == 0.2);
  CHECK(rep.at("values")[1].at("point")[1][1].get<double>() == -0.4);

  Json pts = Json::array();
  pts.push_back(Json::array({Json::array({0.1, 0.2}), Json::array({0.3, 0.0})}));
  auto pfile = write_json(dir / "pts.json", pts);
  auto fromf = run_cli("realize eval --file " + file + " --points " + pfile);
  REQUIRE(fromf.code == 0);
  Json rep2 = Json::parse(fromf.out);
  Matrix a = matrix_from_json(rep.at("values")[0].at("value"), "inline");
  Matrix b = matrix_from_json(rep2.at("values")[0].at("value"), "file");
  CHECK((a - b).norm() == 0.0);

  auto outside = run_cli("realize eval --file " + file + " --points \"2,0\"");
  CHECK(outside.code == 2);
}

TEST_CASE("text format flattens to deterministic key-value lines") {
  auto r1 = run_cli("example spherical --lambda 0.6,0.8 --format text");
  auto r2 = run_cli("example spherical --lambda 0.6,0.8 --format text");
  CHECK(r1.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(r1.out.find("classification.strongly_cc = true") != std::string::npos);
  CHECK(r1.out.find('{') == std::string::npos);
}
