#include "rotaens/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace rotaens;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("rotaens_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string complete_grid(std::size_t weeks) {
    std::string text = "week,age_group,cases\n";
    for (std::size_t w = 1; w <= weeks; ++w)
        for (std::size_t a = 1; a <= 6; ++a) text += std::to_string(w) + "," + std::to_string(a) + "," +
                                                     std::to_string((w * 7 + a * 3) % 11) + "\n";
    return text;
}

CaseSeries parse(const std::string& text) {
    std::istringstream in(text);
    return parse_case_series(in);
}

// Runs the command-line tool and returns its exit status and captured stdout+stderr.
std::pair<int, std::string> run_cli(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "rotaens_cli_output.txt";
    const std::string cmd = std::string(ROTAENS_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(log)};
}

} // namespace

// --- case series -----------------------------------------------------------

TEST(CaseSeriesFile, CompleteGrid) {
    const auto s = parse(complete_grid(118));
    EXPECT_EQ(s.weeks(), 118u);
    EXPECT_EQ(s.cells(), 708u);
    EXPECT_EQ(s.at(0, 0), (7 + 3) % 11);
    EXPECT_EQ(s.at(117, 5), (118 * 7 + 18) % 11);
}

TEST(CaseSeriesFile, RoundTrip) {
    CaseSeries s(9);
    for (std::size_t w = 0; w < 9; ++w)
        for (std::size_t a = 0; a < 6; ++a) s.set(w, a, static_cast<std::int64_t>(w * w + 40 * a));
    std::ostringstream out;
    write_case_series(out, s);
    EXPECT_EQ(parse(out.str()), s);

    const fs::path path = scratch_dir("roundtrip") / "series.csv";
    write_case_series(path, s);
    EXPECT_EQ(load_case_series(path), s);
}

TEST(CaseSeriesFile, DuplicateCellNamed) {
    std::string text = complete_grid(5);
    text += "3,2,4\n";
    try {
        parse(text);
        FAIL() << "duplicate accepted";
    } catch (const GridIncomplete& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("week 3, age_group 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lines 15 and 32"), std::string::npos) << msg;
    }
}

TEST(CaseSeriesFile, MissingCellsListed) {
    std::string text = "week,age_group,cases\n";
    for (std::size_t w = 1; w <= 4; ++w)
        for (std::size_t a = 1; a <= 6; ++a)
            if (!(w == 2 && a == 5) && !(w == 3 && a == 1)) text += std::to_string(w) + "," + std::to_string(a) + ",1\n";
    try {
        parse(text);
        FAIL() << "incomplete grid accepted";
    } catch (const GridIncomplete& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2 missing"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(2, 5)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(3, 1)"), std::string::npos) << msg;
    }
}

TEST(CaseSeriesFile, TrailingWeekGap) {
    // week 4 rows present but week 3 absent entirely
    std::string text = complete_grid(2);
    for (std::size_t a = 1; a <= 6; ++a) text += "4," + std::to_string(a) + ",0\n";
    EXPECT_THROW(parse(text), GridIncomplete);
}

TEST(CaseSeriesFile, ParseErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("week,age,cases\n1,1,1\n"), 1u);
    EXPECT_EQ(line_of(""), 1u);
    EXPECT_EQ(line_of("week,age_group,cases\n1,1,1\n1,7,2\n"), 3u);
    EXPECT_EQ(line_of("week,age_group,cases\n1,1,1\n1,2\n"), 3u);
    EXPECT_EQ(line_of("week,age_group,cases\n1,1,-4\n"), 2u);
    EXPECT_EQ(line_of("week,age_group,cases\n0,1,4\n"), 2u);
    EXPECT_EQ(line_of("week,age_group,cases\n1,1,x\n"), 2u);
    EXPECT_EQ(line_of("week,age_group,cases\n1,1,2.5\n"), 2u);
}

TEST(CaseSeriesFile, MissingFile) {
    EXPECT_THROW(load_case_series("/nonexistent/cases.csv"), Error);
}

TEST(CaseSeriesFile, BundledDatasetIsComplete) {
    const auto s = load_case_series(fs::path(ROTAENS_SOURCE_DIR) / "data" / "synthetic_model_b.csv");
    EXPECT_EQ(s.weeks(), 118u);
    EXPECT_EQ(s.cells(), 708u);
    // regenerating from the default configuration reproduces the file
    EXPECT_EQ(simulate_dataset(RunConfig{}), s);
}

// --- configuration ---------------------------------------------------------

TEST(Config, DefaultsValidate) {
    const RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.models.size(), 5u);
    EXPECT_EQ(c.seed, 20240607u);
    EXPECT_EQ(c.coverages.size(), 11u);
}

TEST(Config, UnknownKeyRejected) {
    RunConfig c;
    EXPECT_THROW(c.set("iteration", "10"), ConfigError);
    EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
    std::istringstream in("seed=3\nwhatever=1\n");
    EXPECT_THROW(parse_config(in), Error);
}

TEST(Config, MalformedValuesRejected) {
    RunConfig c;
    EXPECT_THROW(c.set("iterations", "ten"), ConfigError);
    EXPECT_THROW(c.set("models", "B,F"), ConfigError);
    EXPECT_THROW(c.set("truth_beta", "1,2"), ConfigError);
    c.set("burn_in", "60000");
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, FileAndOverrides) {
    std::istringstream in("# comment\nmodels = B,D\nseed=11\n\ncoverages=0,0.5,1\nseroconversion=0.49\n");
    RunConfig c = parse_config(in);
    EXPECT_EQ(c.models, (std::vector<ModelId>{ModelId::B, ModelId::D}));
    EXPECT_EQ(c.seed, 11u);
    EXPECT_EQ(c.coverages, (std::vector<double>{0.0, 0.5, 1.0}));
    apply_override(c, "seed=12");
    apply_override(c, "truth_beta=3");
    EXPECT_EQ(c.seed, 12u);
    for (double b : c.truth.beta) EXPECT_EQ(b, 3.0);
}

TEST(Config, CanonicalTextRoundTrips) {
    RunConfig c;
    c.set("iterations", "1234");
    c.set("epsilon", "0.005");
    c.set("truth_beta", "1,2,3,4,5,6");
    std::istringstream in(c.to_text());
    const RunConfig back = parse_config(in);
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(fnv1a64(back.to_text()), fnv1a64(c.to_text()));
    EXPECT_NE(fnv1a64(RunConfig{}.to_text()), fnv1a64(c.to_text()));
}

TEST(Hash, FnvReferenceValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(NumberFormat, ExactRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) EXPECT_EQ(std::stod(format_exact(v)), v);
    EXPECT_EQ(format_number(3.49123456789, 4), "3.491");
}

// --- chains ----------------------------------------------------------------

TEST(ChainFile, RoundTrip) {
    PosteriorChain chain;
    chain.model = ModelId::D;
    chain.seed = 99;
    chain.iterations = 30;
    chain.burn_in = 10;
    chain.observations = 708;
    chain.acceptance_rate = 0.25;
    const PriorSpec priors;
    for (int k = 0; k < 4; ++k) {
        ParamVector p;
        p.b = 0.3 + 0.01 * k;
        p.phi = 7.0 + 0.1 / 3.0 * k;
        p.r = 2.0 + k;
        p.rho = 0.1;
        p.beta = {19.0, 20.0, 21.0 + k, 18.5, 20.25, 22.0};
        chain.samples.push_back(p);
        chain.log_likelihoods.push_back(-1600.0 - k);
        chain.log_posteriors.push_back(chain.log_likelihoods.back() + log_prior(p, priors));
    }
    const fs::path path = scratch_dir("chain") / "chain_D.csv";
    write_chain(path, chain);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "b,phi,r,rho,beta1,beta2,beta3,beta4,beta5,beta6,log_posterior");

    const auto back = load_chain(path);
    EXPECT_EQ(back.model, ModelId::D);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.observations, 708u);
    ASSERT_EQ(back.samples.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(back.samples[k].to_array(), chain.samples[k].to_array());
        EXPECT_EQ(back.log_posteriors[k], chain.log_posteriors[k]);
        EXPECT_NEAR(back.log_likelihoods[k], chain.log_likelihoods[k], 1e-9);
    }
}

TEST(ChainFile, MissingChain) {
    EXPECT_THROW(load_chain("/nonexistent/chain_B.csv"), MissingArtifact);
}

TEST(TableFile, ReadMissingColumnAndFile) {
    const fs::path path = scratch_dir("table") / "t.csv";
    Table t{{"x", "y"}, {}};
    t.add({"1", "2"});
    t.write(path);
    const Table back = Table::read(path);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(back.column("y"), 1u);
    EXPECT_THROW(back.column("z"), Error);
    EXPECT_THROW(t.add({"only one"}), Error);
    EXPECT_THROW(Table::read(path.parent_path() / "absent.csv"), MissingArtifact);
}

// --- simulate ----------------------------------------------------------------

TEST(Simulate, ReplicateMeansMatchExpectedCases) {
    RunConfig config;
    const ModelSpec spec(config.truth_model);
    const auto sol = find_periodic_solution(spec, config.truth, AgeStructure::standard(), BirthSchedule::standard());
    const Eigen::MatrixXd xi = tile_profile(sol.expected_profile, config.simulate_weeks);

    constexpr int replicates = 200;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(xi.rows(), xi.cols());
    for (int k = 0; k < replicates; ++k) {
        config.simulate_seed = 1000 + static_cast<std::uint64_t>(k);
        sum += simulate_dataset(config).counts().cast<double>();
    }
    const Eigen::MatrixXd mean = sum / replicates;

    // whole series and each age group's 118-week total within 3%
    EXPECT_NEAR(mean.sum() / xi.sum(), 1.0, 0.03);
    for (Eigen::Index a = 0; a < 6; ++a) EXPECT_NEAR(mean.row(a).sum() / xi.row(a).sum(), 1.0, 0.03) << a;

    // single cells: a single negative-binomial count has coefficient of
    // variation sqrt(1/mu + 1/r) > 0.6, so 200 replicates resolve a cell to
    // about 4.4%; hold each cell to 4.5 standard errors
    const double r = config.truth.r;
    int outside = 0;
    for (Eigen::Index a = 0; a < xi.rows(); ++a)
        for (Eigen::Index t = 0; t < xi.cols(); ++t) {
            const double mu = xi(a, t);
            const double se = std::sqrt((mu + mu * mu / r) / replicates);
            if (std::abs(mean(a, t) - mu) > 4.5 * se) ++outside;
        }
    EXPECT_EQ(outside, 0);
}

TEST(Simulate, SeedDeterminesSeries) {
    RunConfig config;
    EXPECT_EQ(simulate_dataset(config), simulate_dataset(config));
    RunConfig other = config;
    other.simulate_seed += 1;
    EXPECT_FALSE(simulate_dataset(config) == simulate_dataset(other));
}

// --- pipeline ----------------------------------------------------------------

namespace {

RunConfig small_config(const fs::path& out, const fs::path& data) {
    RunConfig c;
    c.models = {ModelId::B};
    c.data = data.string();
    c.output = out.string();
    c.iterations = 60;
    c.burn_in = 20;
    c.adapt_interval = 10;
    c.projection_draws = 3;
    return c;
}

struct PipelineFixture : ::testing::Test {
    static inline fs::path root;
    static inline RunConfig config;

    static void SetUpTestSuite() {
        root = scratch_dir("pipeline");
        const fs::path data = root / "cases.csv";
        write_case_series(data, simulate_dataset(RunConfig{}));
        config = small_config(root / "run1", data);
        run_pipeline(config, {});
    }
};

} // namespace

TEST_F(PipelineFixture, SingleModelArtifacts) {
    const fs::path out = config.output;
    std::size_t chains = 0;
    for (const auto& entry : fs::directory_iterator(out / "chains"))
        if (entry.path().extension() == ".csv") ++chains;
    EXPECT_EQ(chains, 1u);
    EXPECT_TRUE(fs::exists(out / "chains" / "chain_B.csv"));
    EXPECT_TRUE(fs::exists(out / "summary_B.csv"));

    const Table ev = Table::read(out / "evidence.csv");
    ASSERT_EQ(ev.rows.size(), 1u);
    EXPECT_EQ(ev.rows[0][ev.column("model")], "B");
    EXPECT_EQ(std::stod(ev.rows[0][ev.column("pmp")]), 1.0);

    const auto manifest = read_key_values(out / "manifest.txt");
    EXPECT_EQ(manifest.at("seed"), "20240607");
    EXPECT_EQ(manifest.at("version"), kToolVersion);
    EXPECT_EQ(manifest.at("models"), "B");
    EXPECT_EQ(manifest.at("config_hash").size(), 16u);
    EXPECT_EQ(manifest.at("data_hash"), hex64(fnv1a64(slurp(config.data))));
}

TEST_F(PipelineFixture, SingleModelEnsembleEqualsComponent) {
    const Table ens = Table::read(fs::path(config.output) / "ensemble.csv");
    ASSERT_EQ(ens.rows.size(), 2u);
    EXPECT_EQ(ens.rows[1][0], "BMA");
    for (const char* col : {"burden_mean", "burden_lower95", "burden_upper95", "r0_mean"})
        EXPECT_NEAR(std::stod(ens.rows[0][ens.column(col)]), std::stod(ens.rows[1][ens.column(col)]),
                    1e-9 * std::abs(std::stod(ens.rows[0][ens.column(col)])))
            << col;
}

TEST_F(PipelineFixture, AgeDistributionRowsSumToOne) {
    const Table t = Table::read(fs::path(config.output) / "tables" / "fig_age_distribution.csv");
    std::map<std::string, double> sums;
    const std::size_t p = t.column("proportion");
    for (const auto& row : t.rows) sums[row[0] + "|" + row[1] + "|" + row[2] + "|" + row[3]] += std::stod(row[p]);
    EXPECT_EQ(sums.size(), 2u * 2u * 11u * 2u); // models(B, BMA) x scenarios x coverages x {baseline, vaccinated}
    for (const auto& [key, total] : sums) EXPECT_NEAR(total, 1.0, 1e-8) << key;
}

TEST_F(PipelineFixture, RelativeIncidenceAtZeroCoverageIsOne) {
    const Table t = Table::read(fs::path(config.output) / "tables" / "fig_relative_incidence.csv");
    std::size_t rows = 0;
    for (const auto& row : t.rows)
        if (std::stod(row[t.column("coverage")]) == 0.0) {
            ++rows;
            EXPECT_EQ(row[t.column("relative")], "1");
            EXPECT_EQ(row[t.column("lower99")], "1");
            EXPECT_EQ(row[t.column("upper99")], "1");
        }
    EXPECT_EQ(rows, 2u * 2u * 260u);
}

TEST_F(PipelineFixture, ReductionRowMatchesImpactResult) {
    const auto draws = thin_draws(load_chain(chain_path(config, ModelId::B)).samples, config.projection_draws);
    ImpactOptions io;
    io.coverages = {0.7};
    io.seroconversion = 0.63;
    const auto direct =
        vaccination_impact(ModelSpec(ModelId::B), draws, AgeStructure::standard(), BirthSchedule::standard(), io);

    const Table t = Table::read(fs::path(config.output) / "tables" / "fig_reduction.csv");
    bool found = false;
    for (const auto& row : t.rows)
        if (row[0] == "B" && row[1] == "0.63" && row[2] == "0.7") {
            found = true;
            EXPECT_EQ(row[t.column("percent_reduction")], format_number(direct[0].percent_reduction));
            EXPECT_EQ(row[t.column("lower99")], format_number(direct[0].percent_quantile.lower));
            EXPECT_EQ(row[t.column("upper99")], format_number(direct[0].percent_quantile.upper));
            EXPECT_EQ(row[t.column("absolute_reduction")], format_number(direct[0].absolute_reduction));
        }
    EXPECT_TRUE(found);
}

TEST_F(PipelineFixture, RerunIsByteIdentical) {
    RunConfig again = config;
    again.output = (root / "run2").string();
    PipelineOptions options;
    options.threads = 3;
    run_pipeline(again, options);

    std::set<std::string> names;
    for (const auto& entry : fs::recursive_directory_iterator(config.output))
        if (entry.is_regular_file()) names.insert(fs::relative(entry.path(), config.output).string());
    std::set<std::string> names2;
    for (const auto& entry : fs::recursive_directory_iterator(again.output))
        if (entry.is_regular_file()) names2.insert(fs::relative(entry.path(), again.output).string());
    EXPECT_EQ(names, names2);
    for (const auto& name : names) {
        if (name == "config.txt") continue; // records the output directory itself
        EXPECT_EQ(slurp(fs::path(config.output) / name), slurp(fs::path(again.output) / name)) << name;
    }
}

TEST_F(PipelineFixture, StagesRequireTheirInputs) {
    RunConfig empty = config;
    empty.output = (root / "empty").string();
    EXPECT_THROW(stage_summarize(empty, {}), PipelineError);
    EXPECT_THROW(stage_bma(empty, {}), PipelineError);
    EXPECT_THROW(emit_plot_tables(empty), MissingArtifact);
    try {
        stage_project(empty, {});
        FAIL();
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.stage(), "project");
    }
}

TEST(Pipeline, BadDataNamesFitStage) {
    const fs::path root = scratch_dir("baddata");
    std::ofstream(root / "cases.csv") << "week,age_group,cases\n1,1,1\n";
    RunConfig c = small_config(root / "out", root / "cases.csv");
    try {
        run_pipeline(c, {});
        FAIL();
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.stage(), "fit");
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos) << e.what();
    }
}

TEST(Threads, FlagWinsOverConfigAndEnvironment) {
    RunConfig c;
    c.threads = 3;
    EXPECT_EQ(resolve_threads(5, c), 5u);
    EXPECT_EQ(resolve_threads(0, c), 3u);
    c.threads = 0;
    setenv("ROTAENS_THREADS", "7", 1);
    EXPECT_EQ(resolve_threads(0, c), 7u);
    EXPECT_EQ(resolve_threads(2, c), 2u);
    unsetenv("ROTAENS_THREADS");
}

// --- command line ------------------------------------------------------------

TEST(Cli, HelpListsSubcommands) {
    const auto [rc, text] = run_cli("--help");
    EXPECT_EQ(rc, 0);
    for (const char* sub : {"simulate", "fit", "summarize", "bma", "project", "tables", "config"})
        EXPECT_NE(text.find(sub), std::string::npos) << sub;
}

TEST(Cli, DefaultsMatchCanonicalText) {
    const auto [rc, text] = run_cli("config --defaults");
    EXPECT_EQ(rc, 0);
    EXPECT_EQ(text, RunConfig{}.to_text());
}

TEST(Cli, FailuresExitNonzeroNamingStage) {
    {
        const auto [rc, text] = run_cli("--set nonsense=1 fit");
        EXPECT_NE(rc, 0);
        EXPECT_NE(text.find("stage 'config'"), std::string::npos) << text;
    }
    {
        const fs::path root = scratch_dir("cli_fail");
        const auto [rc, text] = run_cli("--set output=" + root.string() + " bma");
        EXPECT_NE(rc, 0);
        EXPECT_NE(text.find("stage 'bma'"), std::string::npos) << text;
    }
}

TEST(Cli, SimulateWritesDataset) {
    const fs::path out = scratch_dir("cli_sim") / "sim.csv";
    const auto [rc, text] = run_cli("--set simulate_weeks=20 simulate --out " + out.string());
    EXPECT_EQ(rc, 0) << text;
    RunConfig c;
    c.simulate_weeks = 20;
    EXPECT_EQ(load_case_series(out), simulate_dataset(c));
}
