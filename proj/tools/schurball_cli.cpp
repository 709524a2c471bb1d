// Command-line front end: JSON file I/O, verification pipelines, and
// machine-readable reports.  Exit codes: 0 = pass/computed, 1 = a
// verification failed, 2 = input or usage error.

#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "schurball/agler.hpp"
#include "schurball/io.hpp"
#include "schurball/rowmodel.hpp"

namespace sb = schurball;
using sb::Json;

namespace {

struct Options {
  std::string file, file_a, file_b, points, lambda;
  std::string format = "json";
  int order = 4;
  int samples = 100;
  int restarts = 8;
  std::uint64_t seed = 1;
  double tol = 1e-9;
};

Json finite_or_label(double v) {
  if (std::isfinite(v)) return Json(v);
  return Json(v > 0 ? "infinity" : "-infinity");
}

Json residual_map(const std::map<std::string, double>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = finite_or_label(v);
  return j;
}

void print_text(std::ostream& os, const Json& j, const std::string& prefix) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items())
      print_text(os, v, prefix.empty() ? k : prefix + "." + k);
    return;
  }
  if (j.is_array() && !j.empty() && (j[0].is_object() || j[0].is_array())) {
    for (size_t i = 0; i < j.size(); ++i)
      print_text(os, j[i], prefix + "[" + std::to_string(i) + "]");
    return;
  }
  os << prefix << " = " << j.dump() << "\n";
}

void emit(const Json& report, const Options& opt) {
  if (opt.format == "text")
    print_text(std::cout, report, "");
  else
    std::cout << report.dump(2) << "\n";
}

std::vector<std::pair<sb::Point, sb::Point>> seeded_pairs(int d, int count,
                                                          std::uint64_t seed) {
  sb::Rng rng(seed);
  std::vector<std::pair<sb::Point, sb::Point>> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i)
    pairs.emplace_back(rng.ball_point(d, 0.9), rng.ball_point(d, 0.9));
  return pairs;
}

Json flags_to_json(const sb::ColligationFlags& f) {
  Json j;
  j["contraction"] = f.contraction;
  j["isometry"] = f.isometry;
  j["coisometry"] = f.coisometry;
  j["unitary"] = f.unitary;
  j["observable"] = f.observable;
  j["controllable"] = f.controllable;
  j["closely_connected"] = f.closely_connected;
  j["weakly_isometric"] = f.weakly_isometric;
  j["weakly_coisometric"] = f.weakly_coisometric;
  j["weakly_unitary"] = f.weakly_unitary;
  j["spans_stabilized"] = f.spans_stabilized;
  return j;
}

int cmd_realize_eval(const Options& opt) {
  sb::Colligation u = sb::load_colligation(opt.file);
  auto pts = sb::parse_points_arg(opt.points, u.d);
  Json report;
  report["command"] = "realize eval";
  report["file"] = opt.file;
  report["d"] = u.d;
  report["n"] = u.n;
  report["p"] = u.p;
  report["q"] = u.q;
  Json values = Json::array();
  for (const auto& z : pts) {
    Json entry;
    entry["point"] = sb::point_to_json(z);
    entry["value"] = sb::matrix_to_json(sb::transfer_eval(u, z));
    values.push_back(std::move(entry));
  }
  report["values"] = std::move(values);
  emit(report, opt);
  return 0;
}

int cmd_check_colligation(const Options& opt) {
  sb::Colligation u = sb::load_colligation(opt.file);
  sb::ColligationFlags f = sb::classify(u, opt.tol);
  Json report;
  report["command"] = "check colligation";
  report["file"] = opt.file;
  report["tol"] = opt.tol;
  report["d"] = u.d;
  report["n"] = u.n;
  report["p"] = u.p;
  report["q"] = u.q;
  report["flags"] = flags_to_json(f);
  report["residuals"] = residual_map(f.residuals);
  report["pass"] = f.contraction;
  emit(report, opt);
  return f.contraction ? 0 : 1;
}

int cmd_agler_verify(const Options& opt) {
  sb::Colligation u = sb::load_colligation(opt.file);
  auto pairs = seeded_pairs(u.d, opt.samples, opt.seed);
  sb::AglerReport rep = sb::agler_verify(u, pairs, opt.tol);
  Json report;
  report["command"] = "agler verify";
  report["file"] = opt.file;
  report["samples"] = opt.samples;
  report["seed"] = opt.seed;
  report["tol"] = opt.tol;
  report["residuals"] = {{"max_total", rep.max_total},
                         {"max_kernel", rep.max_kernel},
                         {"max_difference", rep.max_difference},
                         {"max_gram", rep.max_gram}};
  report["pairs"] = rep.pairs;
  report["pass"] = rep.pass;
  emit(report, opt);
  return rep.pass ? 0 : 1;
}

int cmd_agler_defects(const Options& opt) {
  sb::Colligation u = sb::load_colligation(opt.file);
  sb::ModelGeometry geo = sb::model_subspaces(u, opt.tol);
  Json report;
  report["command"] = "agler defects";
  report["file"] = opt.file;
  report["tol"] = opt.tol;
  report["dims"] = {{"d_sub", geo.d_sub.dim()},
                    {"r_sub", geo.r_sub.dim()},
                    {"d_perp", geo.d_perp.dim()},
                    {"r_perp", geo.r_perp.dim()}};
  report["canonical"] = geo.canonical;
  report["x"] = sb::matrix_to_json(geo.x);
  report["residuals"] = residual_map(geo.residuals);
  emit(report, opt);
  return 0;
}

int cmd_model_verify(const Options& opt) {
  sb::Colligation u = sb::load_colligation(opt.file);
  int order = opt.order;
  Json report;
  report["command"] = "model verify";
  report["file"] = opt.file;
  report["order"] = order;
  report["tol"] = opt.tol;
  bool any_pass = false;
  Json kinds = Json::object();
  for (auto kind :
       {sb::ModelKind::cfm, sb::ModelKind::dcfm, sb::ModelKind::tcfm}) {
    sb::FunctionalModelReport rep =
        sb::functional_model_verify(u, kind, order, opt.tol);
    Json kj;
    kj["pass"] = rep.pass;
    kj["identities_ok"] = rep.identities_ok;
    kj["xcirc_dim"] = rep.xcirc_dim;
    kj["residuals"] = residual_map(rep.residuals);
    kinds[sb::model_kind_name(kind)] = std::move(kj);
    any_pass = any_pass || rep.pass;
  }
  report["kinds"] = std::move(kinds);
  sb::CommutativeModelReport cm =
      sb::commutative_model_check(u, opt.tol, order);
  report["commutative_model"] = {{"commutative", cm.commutative},
                                 {"gleason_contractive", cm.gleason_contractive},
                                 {"shift_invariant", cm.shift_invariant},
                                 {"max_commutator", cm.max_commutator},
                                 {"min_eig", cm.min_eig},
                                 {"shift_residual", cm.shift_residual},
                                 {"shift_order", cm.shift_order}};
  report["flags"] = flags_to_json(sb::classify(u, opt.tol));
  report["pass"] = any_pass;
  emit(report, opt);
  return any_pass ? 0 : 1;
}

int cmd_rowc_charfunc(const Options& opt) {
  sb::RowContraction t = sb::load_row_contraction(opt.file);
  auto pts = sb::parse_points_arg(opt.points, t.d);
  Json report;
  report["command"] = "rowc charfunc";
  report["file"] = opt.file;
  report["d"] = t.d;
  report["n"] = t.n;
  Json values = Json::array();
  for (const auto& z : pts) {
    Json entry;
    entry["point"] = sb::point_to_json(z);
    entry["value"] = sb::matrix_to_json(sb::char_eval(t, z));
    values.push_back(std::move(entry));
  }
  report["values"] = std::move(values);
  emit(report, opt);
  return 0;
}

int cmd_rowc_classify(const Options& opt) {
  sb::RowContraction t = sb::load_row_contraction(opt.file);
  sb::RowClassification cls = sb::classify_row(t);
  Json report;
  report["command"] = "rowc classify";
  report["file"] = opt.file;
  report["d"] = t.d;
  report["n"] = t.n;
  report["classification"] = {
      {"pure", cls.pure},         {"cnc", cls.cnc},
      {"strongly_cc", cls.strongly_cc}, {"cc", cls.cc},
      {"commutative", cls.commutative}, {"stabilized", cls.stabilized},
      {"routes_agree", cls.routes_agree}};
  report["m1_dim"] = cls.m1_dim;
  report["m2_dim"] = cls.m2_dim;
  report["max_commutator"] = cls.max_commutator;
  bool trustworthy =
      cls.stabilized && (!cls.commutative || cls.routes_agree);
  report["pass"] = trustworthy;
  emit(report, opt);
  return trustworthy ? 0 : 1;
}

int cmd_rowc_moments(const Options& opt) {
  sb::RowContraction t = sb::load_row_contraction(opt.file);
  sb::MomentTable table = sb::expanded_moments(t, opt.order);
  Json report;
  report["command"] = "rowc moments";
  report["file"] = opt.file;
  report["order"] = table.order;
  report["constant"] = sb::matrix_to_json(table.constant);
  Json nc = Json::object();
  for (const auto& [key, m] : table.nc) {
    sb::Word w = key.vp;
    w.letters.push_back(key.j);
    nc[sb::word_key(w)] = sb::matrix_to_json(m);
  }
  report["nc"] = std::move(nc);
  Json expanded = Json::object();
  for (const auto& [key, m] : table.expanded) {
    std::string k = sb::word_key(key.v) + "|" + sb::word_key(key.vp) + "|" +
                    std::to_string(key.k) + "|" + std::to_string(key.j);
    expanded[k] = sb::matrix_to_json(m);
  }
  report["expanded"] = std::move(expanded);
  report["crosscheck_residual"] = table.crosscheck_residual;
  report["hermitian_residual"] = table.hermitian_residual;
  bool pass = table.crosscheck_residual <= opt.tol &&
              table.hermitian_residual <= opt.tol;
  report["tol"] = opt.tol;
  report["pass"] = pass;
  emit(report, opt);
  return pass ? 0 : 1;
}

int cmd_rowc_equiv(const Options& opt) {
  sb::RowContraction ta = sb::load_row_contraction(opt.file_a);
  sb::RowContraction tb = sb::load_row_contraction(opt.file_b);
  Json report;
  report["command"] = "rowc equiv";
  report["a"] = opt.file_a;
  report["b"] = opt.file_b;
  report["tol"] = opt.tol;
  report["restarts"] = opt.restarts;
  sb::Point origin(ta.d, sb::Complex(0.0));
  Json inv;
  {
    auto sva = sb::detail::singular_values(sb::char_eval(ta, origin));
    Json ja = Json::array();
    for (Eigen::Index i = 0; i < sva.size(); ++i) ja.push_back(sva(i));
    inv["sigma_theta0_a"] = std::move(ja);
  }
  if (ta.d == tb.d) {
    auto svb = sb::detail::singular_values(sb::char_eval(tb, origin));
    Json jb = Json::array();
    for (Eigen::Index i = 0; i < svb.size(); ++i) jb.push_back(svb(i));
    inv["sigma_theta0_b"] = std::move(jb);
  }
  report["invariants"] = std::move(inv);
  auto w = sb::equiv_intertwiner(ta, tb, std::max(opt.tol, 1e-8),
                                 opt.restarts);
  report["equivalent"] = w.has_value();
  if (w) {
    double scale = sb::res_scale({ta.row().norm(), tb.row().norm()});
    double cert = 0.0;
    for (int k = 0; k < ta.d; ++k)
      cert = std::max(cert,
                      ((*w) * ta.t[k] - tb.t[k] * (*w)).norm() / scale);
    report["witness"] = sb::matrix_to_json(*w);
    report["certificate_residual"] = cert;
  } else {
    report["note"] = "absence of a witness is heuristic unless an exact "
                     "invariant differs";
  }
  emit(report, opt);
  return w ? 0 : 1;
}

int cmd_rowc_triple_equiv(const Options& opt) {
  sb::RowContraction ta = sb::load_row_contraction(opt.file_a);
  sb::RowContraction tb = sb::load_row_contraction(opt.file_b);
  sb::TripleEquivReport rep =
      sb::triple_equiv(ta, tb, opt.tol, opt.restarts);
  Json report;
  report["command"] = "rowc triple-equiv";
  report["a"] = opt.file_a;
  report["b"] = opt.file_b;
  report["tol"] = opt.tol;
  report["restarts"] = opt.restarts;
  report["equivalent"] = rep.equivalent;
  report["sound_negative"] = rep.sound_negative;
  report["witness_residual"] = finite_or_label(rep.witness_residual);
  report["residuals"] = residual_map(rep.residuals);
  if (rep.equivalent) {
    report["alpha"] = sb::matrix_to_json(rep.alpha);
    report["beta"] = sb::matrix_to_json(rep.beta);
    report["w_state"] = sb::matrix_to_json(rep.w_state);
  }
  emit(report, opt);
  return rep.equivalent ? 0 : 1;
}

int cmd_example_spherical(const Options& opt) {
  sb::Point lam = sb::parse_point(opt.lambda, 2);
  sb::SphericalExample ex = sb::spherical_example(lam[0], lam[1], opt.tol);
  sb::Point origin{sb::Complex(0.0), sb::Complex(0.0)};
  Json report;
  report["command"] = "example spherical";
  report["lambda"] = sb::point_to_json(lam);
  report["kernel_origin"] =
      sb::matrix_to_json(sb::big_kernel_eval(ex.theta, origin, origin));
  report["kernel_origin_closed"] =
      sb::matrix_to_json(ex.kernel_closed(origin, origin));
  double closed_gap = 0.0, poly_gap = 0.0;
  for (const auto& [z, w] : sb::sample_pair_grid(2, 20)) {
    closed_gap = std::max(closed_gap, (sb::big_kernel_eval(ex.theta, z, w) -
                                       ex.kernel_closed(z, w))
                                          .norm());
    poly_gap = std::max(poly_gap, ex.identity_residual(z, w));
  }
  report["closed_form_residual"] = closed_gap;
  report["polynomial_identity_residual"] = poly_gap;
  report["classification"] = {{"cnc", ex.cls.cnc},
                              {"strongly_cc", ex.cls.strongly_cc},
                              {"cc", ex.cls.cc},
                              {"pure", ex.cls.pure}};
  report["theta"] = sb::colligation_to_json(ex.theta);
  emit(report, opt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::function<int()> action;
  CLI::App app{"Transfer-function realizations, structured kernels, and "
               "row-contraction models"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* c) {
    c->add_option("--format", opt.format, "Report format: json or text")
        ->check(CLI::IsMember({"json", "text"}));
    c->add_option("--tol", opt.tol, "Residual tolerance");
  };
  auto set_action = [&](CLI::App* c, int (*fn)(const Options&)) {
    c->callback([&, fn]() { action = [&, fn]() { return fn(opt); }; });
  };

  auto* realize = app.add_subcommand("realize", "Transfer-function evaluation");
  realize->require_subcommand(1);
  auto* realize_eval =
      realize->add_subcommand("eval", "Evaluate S(z) at points");
  realize_eval->add_option("--file", opt.file, "Colligation JSON")->required();
  realize_eval->add_option("--points", opt.points,
                           "Points: inline 're+imi,...;...' or a JSON file")
      ->required();
  add_common(realize_eval);
  set_action(realize_eval, cmd_realize_eval);

  auto* check = app.add_subcommand("check", "Structural checks");
  check->require_subcommand(1);
  auto* check_coll =
      check->add_subcommand("colligation", "Classify a colligation");
  check_coll->add_option("--file", opt.file, "Colligation JSON")->required();
  add_common(check_coll);
  set_action(check_coll, cmd_check_colligation);

  auto* agler = app.add_subcommand("agler", "Structured-kernel decomposition");
  agler->require_subcommand(1);
  auto* agler_verify =
      agler->add_subcommand("verify", "Check the decomposition identities");
  agler_verify->add_option("--file", opt.file, "Colligation JSON")->required();
  agler_verify->add_option("--samples", opt.samples, "Sample pair count");
  agler_verify->add_option("--seed", opt.seed, "Sampling seed");
  add_common(agler_verify);
  set_action(agler_verify, cmd_agler_verify);
  auto* agler_defects =
      agler->add_subcommand("defects", "Model subspaces and the corner X");
  agler_defects->add_option("--file", opt.file, "Colligation JSON")
      ->required();
  add_common(agler_defects);
  set_action(agler_defects, cmd_agler_defects);

  auto* model = app.add_subcommand("model", "Functional models");
  model->require_subcommand(1);
  auto* model_verify =
      model->add_subcommand("verify", "Verify functional-model identities");
  model_verify->add_option("--file", opt.file, "Colligation JSON")->required();
  model_verify->add_option("--order", opt.order, "Taylor truncation order");
  add_common(model_verify);
  set_action(model_verify, cmd_model_verify);

  auto* rowc = app.add_subcommand("rowc", "Commuting row contractions");
  rowc->require_subcommand(1);
  auto* charfunc =
      rowc->add_subcommand("charfunc", "Evaluate the characteristic function");
  charfunc->add_option("--file", opt.file, "Row-contraction JSON")->required();
  charfunc->add_option("--points", opt.points,
                       "Points: inline 're+imi,...;...' or a JSON file")
      ->required();
  add_common(charfunc);
  set_action(charfunc, cmd_rowc_charfunc);
  auto* rclassify = rowc->add_subcommand("classify", "Connectedness classes");
  rclassify->add_option("--file", opt.file, "Row-contraction JSON")
      ->required();
  add_common(rclassify);
  set_action(rclassify, cmd_rowc_classify);
  auto* rmoments = rowc->add_subcommand("moments", "Characteristic moments");
  rmoments->add_option("--file", opt.file, "Row-contraction JSON")->required();
  rmoments->add_option("--order", opt.order, "Maximum word length");
  add_common(rmoments);
  set_action(rmoments, cmd_rowc_moments);
  auto* requiv = rowc->add_subcommand("equiv", "Unitary-equivalence witness");
  requiv->add_option("--a", opt.file_a, "Row-contraction JSON")->required();
  requiv->add_option("--b", opt.file_b, "Row-contraction JSON")->required();
  requiv->add_option("--restarts", opt.restarts, "Search restarts");
  add_common(requiv);
  set_action(requiv, cmd_rowc_equiv);
  auto* rtriple =
      rowc->add_subcommand("triple-equiv", "Characteristic-triple test");
  rtriple->add_option("--a", opt.file_a, "Row-contraction JSON")->required();
  rtriple->add_option("--b", opt.file_b, "Row-contraction JSON")->required();
  rtriple->add_option("--restarts", opt.restarts, "Search restarts");
  add_common(rtriple);
  set_action(rtriple, cmd_rowc_triple_equiv);

  auto* example = app.add_subcommand("example", "Built-in worked examples");
  example->require_subcommand(1);
  auto* spherical =
      example->add_subcommand("spherical", "Coisometric pair on the sphere");
  spherical
      ->add_option("--lambda", opt.lambda, "Sphere point 'l1,l2' (complex)")
      ->required();
  add_common(spherical);
  set_action(spherical, cmd_example_spherical);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
