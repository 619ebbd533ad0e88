#include "support/json_io.hpp"

#include <sstream>

namespace qi::io {

Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  Json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  out["data"] = std::move(rows);
  return out;
}

Mat mat_from_json(const Json& j) {
  const Index r = j.at("rows").get<Index>();
  const Index c = j.at("cols").get<Index>();
  Mat m(r, c);
  const auto& data = j.at("data");
  for (Index i = 0; i < r; ++i) {
    for (Index k = 0; k < c; ++k) m(i, k) = data.at(i).at(k).get<double>();
  }
  return m;
}

Json model_to_json(const datagen::PerturbationModel& model) {
  Json j;
  if (model.is_single()) {
    const auto& sm = model.as_single();
    j["type"] = "single";
    j["e"] = mat_to_json(sm.e);
    j["n_hat"] = sm.phi_hat.q();
    j["t"] = sm.phi_hat.r();
    j["phi_hat"] = mat_to_json(sm.phi_hat.n().mat());
  } else {
    const auto& sm = model.as_structured();
    j["type"] = "structured";
    j["n_d"] = sm.n_d;
    j["t"] = sm.t;
    Json terms = Json::array();
    for (const auto& term : sm.terms) {
      Json tj;
      tj["e"] = mat_to_json(term.e_j);
      tj["f"] = mat_to_json(term.f_j);
      tj["n_j"] = term.phi_j.q();
      tj["t_j"] = term.phi_j.r();
      tj["phi"] = mat_to_json(term.phi_j.n().mat());
      terms.push_back(std::move(tj));
    }
    j["terms"] = std::move(terms);
  }
  return j;
}

datagen::PerturbationModel model_from_json(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "single") {
    const Index nh = j.at("n_hat").get<Index>();
    const Index t = j.at("t").get<Index>();
    return datagen::PerturbationModel::single(
        mat_from_json(j.at("e")),
        qmi::QmiSet(SymMat(mat_from_json(j.at("phi_hat")), 1e-5), nh, t));
  }
  if (type != "structured") throw MatError("model_from_json: unknown type " + type);
  std::vector<datagen::StructuredTerm> terms;
  for (const auto& tj : j.at("terms")) {
    terms.push_back({mat_from_json(tj.at("e")), mat_from_json(tj.at("f")),
                     qmi::QmiSet(SymMat(mat_from_json(tj.at("phi")), 1e-5),
                                 tj.at("n_j").get<Index>(), tj.at("t_j").get<Index>())});
  }
  return datagen::PerturbationModel::structured(std::move(terms), j.at("n_d").get<Index>(),
                                                j.at("t").get<Index>());
}

Json dataset_to_json(const datagen::SigmaSet& sigma, std::uint64_t seed) {
  Json j;
  j["schema_version"] = 1;
  j["kind"] = sigma.data.kind == datagen::DataKind::autoregressive ? "ar" : "state_space";
  Json dims;
  if (sigma.data.kind == datagen::DataKind::autoregressive) {
    dims["p"] = sigma.data.q();
    dims["m"] = sigma.data.u.rows();
    dims["order"] = sigma.data.ar_order;
  } else {
    dims["n"] = sigma.data.q();
    dims["m"] = sigma.data.u.rows();
  }
  j["dims"] = std::move(dims);
  j["t"] = sigma.data.t();
  j["x_plus"] = mat_to_json(sigma.data.x_plus);
  j["x"] = mat_to_json(sigma.data.x);
  j["u"] = mat_to_json(sigma.data.u);
  j["model"] = model_to_json(sigma.model);
  j["seed"] = seed;
  return j;
}

DatasetDoc dataset_from_json(const Json& j) {
  datagen::DataRecord d;
  d.kind = j.at("kind").get<std::string>() == "ar" ? datagen::DataKind::autoregressive
                                                   : datagen::DataKind::state_space;
  if (d.kind == datagen::DataKind::autoregressive) {
    d.ar_order = j.at("dims").at("order").get<Index>();
  }
  d.x_plus = mat_from_json(j.at("x_plus"));
  d.x = mat_from_json(j.at("x"));
  d.u = mat_from_json(j.at("u"));
  return DatasetDoc{datagen::SigmaSet{std::move(d), model_from_json(j.at("model"))},
                    j.value("seed", std::uint64_t{0})};
}

const char* status_name(informativity::SynthStatus s) {
  switch (s) {
    case informativity::SynthStatus::informative_certified:
      return "informative_certified";
    case informativity::SynthStatus::not_certified:
      return "not_certified";
    default:
      return "solver_error";
  }
}

std::optional<informativity::SynthStatus> status_from_name(const std::string& name) {
  if (name == "informative_certified") return informativity::SynthStatus::informative_certified;
  if (name == "not_certified") return informativity::SynthStatus::not_certified;
  if (name == "solver_error") return informativity::SynthStatus::solver_error;
  return std::nullopt;
}

Json result_to_json(const informativity::SynthesisResult& res) {
  Json j;
  j["schema_version"] = 1;
  j["status"] = status_name(res.status);
  j["method"] = res.method;
  j["k"] = res.k.size() > 0 ? mat_to_json(res.k) : Json(nullptr);
  Json cert;
  cert["alpha"] = res.alpha;
  cert["beta"] = res.beta;
  cert["p_or_y"] = res.p_or_y.size() > 0 ? mat_to_json(res.p_or_y) : Json(nullptr);
  cert["l"] = res.l.size() > 0 ? mat_to_json(res.l) : Json(nullptr);
  j["certificates"] = std::move(cert);
  j["gamma"] = res.gamma;
  j["residuals"] = Json{{"worst", res.residual}};
  j["necessary_and_sufficient"] = res.necessary_and_sufficient;
  Json aux;
  for (const auto& [key, m] : res.aux) aux[key] = mat_to_json(m);
  j["aux"] = std::move(aux);
  j["wall_time_ms"] = res.wall_time_ms;
  return j;
}

Json report_to_json(const verify::VerificationReport& rep, bool with_detail) {
  Json j;
  j["schema_version"] = 1;
  j["n_samples"] = rep.n_samples;
  j["violations"] = rep.violations;
  j["worst_margin"] = rep.worst_margin;
  if (with_detail) {
    Json det = Json::array();
    for (const auto& d : rep.detail) {
      det.push_back(Json{{"metric", d.metric}, {"pass", d.pass}});
    }
    j["detail"] = std::move(det);
  }
  return j;
}

std::string report_to_csv(const verify::VerificationReport& rep) {
  std::ostringstream os;
  os << "# qmi-info csv schema 1\n";
  os << "sample,metric,pass\n";
  os.precision(17);
  for (std::size_t i = 0; i < rep.detail.size(); ++i) {
    os << i << "," << rep.detail[i].metric << "," << (rep.detail[i].pass ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace qi::io
