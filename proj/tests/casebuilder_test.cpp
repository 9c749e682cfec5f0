#include <gtest/gtest.h>

#include "dassim/assimilation.hpp"
#include "dassim/casebuilder.hpp"
#include "dassim/testbeds.hpp"
#include "test_util.hpp"

using namespace dassim;
using namespace dassim::test;

namespace {

// Short Lorenz twin shared by most tests: three observations 40 steps apart.
struct Twin {
    Lorenz63Config cfg;
    std::size_t gap = 40;
    Matrix truth;
    ObservationSeries obs;
    DifferentiableOperator m;

    Twin() {
        cfg.t_final = 0.121;
        truth = lorenz_trajectory(cfg);
        Rng rng(3);
        obs = make_observations(truth, gap, 0.01, rng);
        m = lorenz_forward_model(cfg, gap);
    }
};

const Twin& twin() {
    static const Twin t;
    return t;
}

ParameterMap var4d_map() {
    const Twin& t = twin();
    const std::size_t n_obs = t.obs.size();
    return {
        {"algorithm", Algorithm::Var4D},
        {"observation_model", identity_operator(3)},
        {"background_covariance_matrix", Matrix::identity(3)},
        {"observation_covariance_matrix", Matrix::identity(3) * 1e-2},
        {"background_state", Vector{0.5, 1.5, 2.5}},
        {"observations", t.obs.values},
        {"forward_model", t.m},
        {"output_sequence_length", std::int64_t(t.gap + 1)},
        {"observation_time_steps", t.obs.times},
        {"gaps", std::vector<std::size_t>(n_obs - 1, t.gap)},
        {"learning_rate", 7.5e-3},
        {"args", Vector{t.cfg.r, t.cfg.sigma, t.cfg.beta}},
        {"device", Device::CPU},
        {"max_iterations", std::int64_t(20)},
    };
}

ParameterSet enkf_set() {
    const Twin& t = twin();
    ParameterSet p;
    p.algorithm = Algorithm::EnKF;
    p.device = Device::CPU;
    p.observation_model = Matrix::identity(3);
    p.background_covariance_matrix = Matrix::identity(3);
    p.observation_covariance_matrix = Matrix::identity(3) * 1e-4;
    p.background_state = Matrix::row_vector(Vector{0.5, 1.5, 2.5});
    p.observations = t.obs.values;
    p.observation_time_steps = t.obs.times;
    p.gaps = t.obs.gaps;
    p.num_ensembles = 10;
    p.output_sequence_length = t.gap + 1;
    p.forward_model = t.m;
    p.seed = 4;
    return p;
}

bool mentions(const std::vector<ValidationIssue>& issues, std::string_view param) {
    for (const auto& i : issues)
        if (i.parameter == param) return true;
    return false;
}

const Matrix& as_mat(const ResultValue& v) { return std::get<Matrix>(v); }

}  // namespace

TEST(CaseBuilder, SetThenGetRoundTrips) {
    CaseBuilder cb("rt");
    cb.set_parameter("learning_rate", 0.25).set_parameter("num_ensembles", 7).set_parameter("algorithm", "Var3D");
    EXPECT_EQ(std::get<double>(*cb.get_parameter("learning_rate")), 0.25);
    EXPECT_EQ(std::get<std::int64_t>(*cb.get_parameter("num_ensembles")), 7);
    EXPECT_EQ(std::get<Algorithm>(*cb.get_parameter("algorithm")), Algorithm::Var3D);
    EXPECT_FALSE(cb.get_parameter("gaps").has_value());
    EXPECT_EQ(cb.get_parameters_dict().size(), 3u);
}

TEST(CaseBuilder, UnknownNameAndWrongTypeLeaveStateAlone) {
    CaseBuilder cb;
    cb.set_learning_rate(0.1);
    const ParameterSet before = cb.parameters();
    EXPECT_THROW(cb.set_parameter("learning_rat", 0.5), UnknownParameter);
    EXPECT_THROW(cb.set_parameter("learning_rate", "fast"), TypeMismatch);
    EXPECT_THROW(cb.set_parameter("algorithm", "Var5D"), TypeMismatch);
    EXPECT_THROW(cb.set_parameter("record_log", 1.0), TypeMismatch);
    EXPECT_EQ(cb.parameters(), before);
}

TEST(CaseBuilder, BatchIsAtomic) {
    CaseBuilder cb;
    cb.set_learning_rate(0.1);
    const ParameterSet before = cb.parameters();
    ParameterMap bad = {{"learning_rate", 0.9}, {"max_iterations", std::int64_t(3)}, {"zzz", 1.0}};
    EXPECT_THROW(cb.set_parameters(bad), UnknownParameter);
    EXPECT_EQ(cb.parameters(), before);
    ParameterMap wrong = {{"learning_rate", 0.9}, {"max_iterations", std::string("many")}};
    EXPECT_THROW(cb.set_parameters(wrong), TypeMismatch);
    EXPECT_EQ(cb.parameters(), before);
    cb.set_parameters(ParameterMap{});
    EXPECT_EQ(cb.parameters(), before);
}

TEST(CaseBuilder, OrderOfAssignmentDoesNotMatter) {
    ParameterMap map = var4d_map();
    CaseBuilder forward, backward;
    for (auto it = map.begin(); it != map.end(); ++it) forward.set_parameter(it->first, it->second);
    for (auto it = map.rbegin(); it != map.rend(); ++it) backward.set_parameter(it->first, it->second);
    EXPECT_EQ(forward.parameters(), backward.parameters());
}

TEST(CaseBuilder, DictionaryCaseIsAcceptedAndRuns) {
    CaseBuilder cb("lorenz_4dvar", {});
    cb.set_parameters(var4d_map());
    EXPECT_TRUE(cb.validate().empty());
    const ResultMap& res = cb.execute();
    ASSERT_EQ(res.size(), 2u);
    EXPECT_EQ(as_mat(res.at("assimilated_state")).cols(), 3u);
    const auto& ir = std::get<IntermediateResults>(res.at("intermediate_results"));
    std::vector<std::string> keys;
    for (const auto& [k, v] : ir) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"J", "J_grad_norm", "Jb", "Jo", "background_states"}));
    const auto& j = std::get<std::vector<double>>(ir.at("J"));
    EXPECT_EQ(j.size(), 20u);
    EXPECT_LT(j.back(), j.front());
}

TEST(CaseBuilder, ValidationNamesTheOffendingParameter) {
    {
        ParameterMap map = var4d_map();
        map.erase("learning_rate");
        CaseBuilder cb;
        cb.set_parameters(map);
        EXPECT_TRUE(mentions(cb.validate(), "learning_rate"));
        try {
            cb.execute();
            FAIL() << "expected ValidationFailed";
        } catch (const ValidationFailed& e) {
            EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
        }
    }
    {
        CaseBuilder cb;
        cb.set_parameters(var4d_map());
        cb.set_observations(Matrix::row_vector(twin().obs.value(0)));
        cb.set_parameter("observation_time_steps", std::vector<std::size_t>{twin().gap});
        cb.set_gaps({});
        EXPECT_TRUE(mentions(cb.validate(), "observations"));
    }
    {
        CaseBuilder cb;
        cb.set_parameters(var4d_map());
        cb.set_background_covariance_matrix(Matrix{{1, 0.5, 0}, {0.4, 1, 0}, {0, 0, 1}});
        EXPECT_TRUE(mentions(cb.validate(), "background_covariance_matrix"));
        cb.set_background_covariance_matrix(Matrix{{1, 0, 0}, {0, -1, 0}, {0, 0, 1}});
        EXPECT_TRUE(mentions(cb.validate(), "background_covariance_matrix"));
    }
    {
        CaseBuilder cb;
        cb.set_parameters(var4d_map());
        cb.set_device(Device::GPU);
        EXPECT_TRUE(mentions(cb.validate(), "device"));
    }
    {
        CaseBuilder cb;
        cb.set_parameters(var4d_map());
        cb.set_output_sequence_length(twin().gap);
        EXPECT_TRUE(mentions(cb.validate(), "output_sequence_length"));
        cb.set_output_sequence_length(twin().gap + 1).set_gaps({twin().gap, twin().gap + 1});
        EXPECT_FALSE(cb.validate().empty());
        cb.set_gaps({twin().gap, twin().gap}).set_args(Vector{1.0});
        EXPECT_TRUE(mentions(cb.validate(), "args"));
    }
}

TEST(CaseBuilder, ReportsEveryMissingRequiredParameter) {
    auto issues = CaseBuilder().validate();
    for (auto name : kRequiredParameters) EXPECT_TRUE(mentions(issues, name)) << name;
}

TEST(CaseBuilder, EnkfKeysAndShapes) {
    CaseBuilder cb("enkf", enkf_set());
    ASSERT_TRUE(cb.validate().empty());
    const ResultMap& res = cb.execute();
    ASSERT_EQ(res.size(), 2u);
    const Matrix& avg = as_mat(res.at("average_ensemble_all_states"));
    const auto& members = std::get<std::vector<Matrix>>(res.at("each_ensemble_all_states"));
    EXPECT_EQ(avg.rows(), twin().obs.times.back() + 1);
    EXPECT_EQ(members.size(), 10u);
    EXPECT_EQ(members[0].rows(), avg.rows());
}

TEST(CaseBuilder, ResultsAreDeepCopies) {
    CaseBuilder cb("copy", enkf_set());
    cb.execute();
    ResultValue v = cb.get_result("average_ensemble_all_states");
    const double original = as_mat(v)(1, 1);
    std::get<Matrix>(v)(1, 1) = 1e9;
    ResultMap all = cb.get_results_dict();
    std::get<Matrix>(all["average_ensemble_all_states"])(1, 1) = -1e9;
    EXPECT_EQ(as_mat(cb.get_result("average_ensemble_all_states"))(1, 1), original);
    EXPECT_THROW(cb.get_result("nope"), UnknownParameter);
}

TEST(CaseBuilder, ReExecutionIsDeterministic) {
    CaseBuilder cb("again", enkf_set());
    ResultMap first = cb.execute();
    ResultMap second = cb.execute();
    EXPECT_EQ(as_mat(first["average_ensemble_all_states"]), as_mat(second["average_ensemble_all_states"]));
    cb.set_seed(5);
    ResultMap third = cb.execute();
    EXPECT_NE(as_mat(first["average_ensemble_all_states"]), as_mat(third["average_ensemble_all_states"]));
}

TEST(CaseBuilder, EnkfMatchesDirectCall) {
    const Twin& t = twin();
    CaseBuilder cb("direct", enkf_set());
    FilterOutput direct = enkf(10, t.m, identity_operator(3), CovarianceMatrix(Matrix::identity(3)),
                               CovarianceMatrix(Matrix::identity(3) * 1e-4), Vector{0.5, 1.5, 2.5}, t.obs, Rng(4));
    EXPECT_EQ(as_mat(cb.execute().at("average_ensemble_all_states")), direct.average_trajectory);
}

TEST(CaseBuilder, ThreeEntryStylesAgree) {
    Rng rng(8);
    Matrix h = random_matrix(2, 4, rng);
    Matrix b = random_spd(4, rng);
    Matrix r = random_spd(2, rng);
    Matrix xb = random_matrix(3, 4, rng);
    Matrix y = random_matrix(3, 2, rng);

    CaseBuilder chained("chained");
    chained.set_observation_model(h)
        .set_background_covariance_matrix(b)
        .set_observation_covariance_matrix(r)
        .set_learning_rate(0.05)
        .set_max_iterations(30)
        .set_algorithm(Algorithm::Var3D)
        .set_device(Device::CPU);
    chained.set_background_state(xb).set_observations(y);

    ParameterSet p;
    p.algorithm = Algorithm::Var3D;
    p.device = Device::CPU;
    p.observation_model = h;
    p.background_covariance_matrix = b;
    p.observation_covariance_matrix = r;
    p.background_state = xb;
    p.observations = y;
    p.learning_rate = 0.05;
    p.max_iterations = 30;
    CaseBuilder structured("structured", p);

    CaseBuilder dict("dict");
    dict.set_parameters(ParameterMap{{"algorithm", std::string("Var3D")},
                                     {"device", std::string("CPU")},
                                     {"observation_model", h},
                                     {"background_covariance_matrix", b},
                                     {"observation_covariance_matrix", r},
                                     {"background_state", xb},
                                     {"observations", y},
                                     {"learning_rate", 0.05},
                                     {"max_iterations", std::int64_t(30)}});

    EXPECT_EQ(chained.parameters(), structured.parameters());
    EXPECT_EQ(dict.parameters(), structured.parameters());
    ResultMap a = chained.execute(), s = structured.execute(), d = dict.execute();
    EXPECT_EQ(as_mat(a["assimilated_state"]), as_mat(s["assimilated_state"]));
    EXPECT_EQ(as_mat(d["assimilated_state"]), as_mat(s["assimilated_state"]));
    EXPECT_EQ(as_mat(s["assimilated_state"]).rows(), 3u);
    auto ir = std::get<IntermediateResults>(s["intermediate_results"]);
    EXPECT_EQ(ir.count("Jb"), 0u);
    EXPECT_EQ(std::get<std::vector<Matrix>>(ir["background_states"]).size(), 30u);
}

TEST(CaseBuilder, RecordLogOffKeepsKeysButDropsStates) {
    CaseBuilder cb;
    cb.set_parameters(var4d_map()).set_record_log(false);
    auto ir = std::get<IntermediateResults>(cb.execute().at("intermediate_results"));
    EXPECT_TRUE(std::get<std::vector<Matrix>>(ir.at("background_states")).empty());
    EXPECT_EQ(std::get<std::vector<double>>(ir.at("J")).size(), 20u);
}

TEST(CaseBuilder, ObservationSeriesStandsInForTimesAndGaps) {
    ParameterSet p = enkf_set();
    p.observations = twin().obs;
    p.observation_time_steps.reset();
    p.gaps.reset();
    CaseBuilder a("series", p), b("explicit", enkf_set());
    EXPECT_TRUE(a.validate().empty());
    EXPECT_EQ(as_mat(a.execute().at("average_ensemble_all_states")),
              as_mat(b.execute().at("average_ensemble_all_states")));
}

TEST(CaseBuilder, ExecutionErrorsKeepTheirType) {
    // A forward model that blows up: validation passes, execution reports NaN with case context.
    auto bad = callable_operator(
        3, twin().gap + 1, 3,
        [](const Matrix& x) {
            Matrix out(twin().gap + 1, 3, std::nan(""));
            out.set_row(0, x.row(0));
            return out;
        },
        [](const Matrix&, const Matrix&) { return Matrix(1, 3); }, "nan_model");
    ParameterSet p = enkf_set();
    p.forward_model = bad;
    CaseBuilder cb("blowup", p);
    EXPECT_TRUE(cb.validate().empty());
    try {
        cb.execute();
        FAIL() << "expected NanEncountered";
    } catch (const NanEncountered& e) {
        EXPECT_NE(std::string(e.what()).find("blowup"), std::string::npos);
    }
}
