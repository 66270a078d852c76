#include <set>

#include "periop/errors.hpp"
#include "periop/models.hpp"

namespace periop {

namespace {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Reads `key` into `field` when present; unknown keys are rejected by the
// caller so a typo in a grid never silently falls back to a default.
template <class T>
void read(const json& j, const char* key, T& field, std::set<std::string>& used) {
  used.insert(key);
  if (j.contains(key)) field = j.at(key).get<T>();
}

json trees_json(const std::vector<Tree>& trees) {
  json a = json::array();
  for (const Tree& t : trees) a.push_back(to_json(t));
  return a;
}

std::vector<Tree> trees_from(const json& j) {
  std::vector<Tree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t));
  return out;
}

}  // namespace

json to_json(const Hyperparams& hp) {
  json j = std::visit(
      overloaded{
          [](const LogisticParams& p) -> json {
            return {{"l2_lambda", p.l2_lambda}, {"max_iter", p.max_iter}, {"tol", p.tol}};
          },
          [](const NaiveBayesParams& p) -> json {
            return {{"laplace_alpha", p.laplace_alpha}, {"var_floor", p.var_floor}};
          },
          [](const TreeParams& p) -> json {
            return {{"max_depth", p.max_depth}, {"min_samples_leaf", p.min_samples_leaf}};
          },
          [](const ForestParams& p) -> json {
            return {{"n_trees", p.n_trees},
                    {"max_depth", p.max_depth},
                    {"features_per_split", p.features_per_split},
                    {"bootstrap", p.bootstrap},
                    {"min_samples_leaf", p.min_samples_leaf}};
          },
          [](const AdaBoostParams& p) -> json {
            return {{"n_rounds", p.n_rounds}, {"stump_depth", p.stump_depth}};
          },
          [](const GradBoostParams& p) -> json {
            return {{"n_rounds", p.n_rounds},
                    {"learning_rate", p.learning_rate},
                    {"max_depth", p.max_depth},
                    {"l2_lambda", p.l2_lambda},
                    {"gamma_min_gain", p.gamma_min_gain},
                    {"min_child_hessian", p.min_child_hessian}};
          },
          [](const MlpParams& p) -> json {
            return {{"hidden_width", p.hidden_width},
                    {"learning_rate", p.learning_rate},
                    {"epochs", p.epochs},
                    {"batch_size", p.batch_size},
                    {"l2_lambda", p.l2_lambda}};
          },
      },
      hp);
  j["family"] = to_string(family_of(hp));
  return j;
}

Hyperparams hyperparams_from_json(const json& j) {
  if (!j.is_object() || !j.contains("family")) throw ConfigError("hyperparameters need a 'family'");
  const auto fam = parse_family(j.at("family").get<std::string>());
  if (!fam) throw ConfigError("unknown model family '" + j.at("family").get<std::string>() + "'");
  Hyperparams hp = default_hyperparams(*fam);
  std::set<std::string> used = {"family"};
  try {
    std::visit(overloaded{
                   [&](LogisticParams& p) {
                     read(j, "l2_lambda", p.l2_lambda, used);
                     read(j, "max_iter", p.max_iter, used);
                     read(j, "tol", p.tol, used);
                   },
                   [&](NaiveBayesParams& p) {
                     read(j, "laplace_alpha", p.laplace_alpha, used);
                     read(j, "var_floor", p.var_floor, used);
                   },
                   [&](TreeParams& p) {
                     read(j, "max_depth", p.max_depth, used);
                     read(j, "min_samples_leaf", p.min_samples_leaf, used);
                   },
                   [&](ForestParams& p) {
                     read(j, "n_trees", p.n_trees, used);
                     read(j, "max_depth", p.max_depth, used);
                     read(j, "features_per_split", p.features_per_split, used);
                     read(j, "bootstrap", p.bootstrap, used);
                     read(j, "min_samples_leaf", p.min_samples_leaf, used);
                   },
                   [&](AdaBoostParams& p) {
                     read(j, "n_rounds", p.n_rounds, used);
                     read(j, "stump_depth", p.stump_depth, used);
                   },
                   [&](GradBoostParams& p) {
                     read(j, "n_rounds", p.n_rounds, used);
                     read(j, "learning_rate", p.learning_rate, used);
                     read(j, "max_depth", p.max_depth, used);
                     read(j, "l2_lambda", p.l2_lambda, used);
                     read(j, "gamma_min_gain", p.gamma_min_gain, used);
                     read(j, "min_child_hessian", p.min_child_hessian, used);
                   },
                   [&](MlpParams& p) {
                     read(j, "hidden_width", p.hidden_width, used);
                     read(j, "learning_rate", p.learning_rate, used);
                     read(j, "epochs", p.epochs, used);
                     read(j, "batch_size", p.batch_size, used);
                     read(j, "l2_lambda", p.l2_lambda, used);
                   },
               },
               hp);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad hyperparameter value: ") + e.what());
  }
  for (const auto& [key, _] : j.items())
    if (!used.count(key))
      throw ConfigError("unknown hyperparameter '" + key + "' for " +
                        std::string(to_string(*fam)));
  validate(hp);
  return hp;
}

json to_json(const TrainedModel& m) {
  json cols = json::array();
  for (const auto& c : m.columns) cols.push_back(to_json(c));
  json state = std::visit(
      overloaded{
          [](const LogisticState& s) -> json {
            return {{"w", s.w}, {"intercept", s.intercept}, {"iterations", s.iterations},
                    {"grad_norm", s.grad_norm}};
          },
          [](const NaiveBayesState& s) -> json {
            return {{"log_prior", {s.log_prior[0], s.log_prior[1]}},
                    {"gaussian", s.gaussian},
                    {"mean", {s.mean[0], s.mean[1]}},
                    {"var", {s.var[0], s.var[1]}},
                    {"p1", {s.p1[0], s.p1[1]}}};
          },
          [](const TreeState& s) -> json { return {{"tree", to_json(s.tree)}}; },
          [](const ForestState& s) -> json { return {{"trees", trees_json(s.trees)}}; },
          [](const AdaBoostState& s) -> json {
            return {{"trees", trees_json(s.trees)}, {"alphas", s.alphas},
                    {"skipped_rounds", s.skipped_rounds}};
          },
          [](const GradBoostState& s) -> json {
            return {{"base_score", s.base_score}, {"trees", trees_json(s.trees)},
                    {"train_loss", s.train_loss}};
          },
          [](const MlpState& s) -> json {
            return {{"hidden", s.hidden}, {"inputs", s.inputs}, {"w1", s.w1},
                    {"b1", s.b1},         {"w2", s.w2},         {"b2", s.b2}};
          },
      },
      m.state);
  return {{"format", "periop-model"},
          {"version", kModelFormatVersion},
          {"family", to_string(m.family)},
          {"hyperparams", to_json(m.hp)},
          {"seed", m.seed},
          {"columns", cols},
          {"state", state}};
}

TrainedModel model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "periop-model") throw Error("not a model document");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw Error("unsupported model format version " + std::to_string(version));
    TrainedModel m;
    m.hp = hyperparams_from_json(j.at("hyperparams"));
    m.family = family_of(m.hp);
    if (to_string(m.family) != j.at("family").get<std::string>())
      throw Error("model family does not match its hyperparameters");
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("columns")) m.columns.push_back(column_from_json(c));
    const json& s = j.at("state");
    switch (m.family) {
      case Family::kLogistic: {
        LogisticState st;
        st.w = s.at("w").get<std::vector<double>>();
        st.intercept = s.at("intercept").get<double>();
        st.iterations = s.at("iterations").get<int>();
        st.grad_norm = s.at("grad_norm").get<double>();
        if (st.w.size() != m.columns.size()) throw Error("weight count does not match columns");
        m.state = std::move(st);
        break;
      }
      case Family::kNaiveBayes: {
        NaiveBayesState st;
        for (int c = 0; c < 2; ++c) {
          st.log_prior[c] = s.at("log_prior")[c].get<double>();
          st.mean[c] = s.at("mean")[c].get<std::vector<double>>();
          st.var[c] = s.at("var")[c].get<std::vector<double>>();
          st.p1[c] = s.at("p1")[c].get<std::vector<double>>();
        }
        st.gaussian = s.at("gaussian").get<std::vector<std::uint8_t>>();
        m.state = std::move(st);
        break;
      }
      case Family::kTree: m.state = TreeState{tree_from_json(s.at("tree"))}; break;
      case Family::kRandomForest: m.state = ForestState{trees_from(s.at("trees"))}; break;
      case Family::kAdaBoost:
        m.state = AdaBoostState{trees_from(s.at("trees")), s.at("alphas").get<std::vector<double>>(),
                                s.at("skipped_rounds").get<int>()};
        break;
      case Family::kGradBoost:
        m.state = GradBoostState{s.at("base_score").get<double>(), trees_from(s.at("trees")),
                                 s.at("train_loss").get<std::vector<double>>()};
        break;
      case Family::kMlp: {
        MlpState st;
        st.hidden = s.at("hidden").get<int>();
        st.inputs = s.at("inputs").get<std::size_t>();
        st.w1 = s.at("w1").get<std::vector<double>>();
        st.b1 = s.at("b1").get<std::vector<double>>();
        st.w2 = s.at("w2").get<std::vector<double>>();
        st.b2 = s.at("b2").get<double>();
        const auto h = static_cast<std::size_t>(st.hidden);
        if (st.w1.size() != h * st.inputs || st.b1.size() != h || st.w2.size() != h)
          throw Error("mlp weight shapes are inconsistent");
        m.state = std::move(st);
        break;
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace periop
