#include "rotaens/io.hpp"

#include "rotaens/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rotaens {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

template <class T>
bool parse_integer(const std::string& s, T& out) {
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

} // namespace

// --- case series -----------------------------------------------------------

CaseSeries parse_case_series(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty input, expected header week,age_group,cases", 1);
    ++lineno;
    if (trim(line) != "week,age_group,cases")
        throw ParseError("header must be exactly week,age_group,cases", lineno);

    struct Row {
        std::int64_t week, age, cases;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::int64_t max_week = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 3) throw ParseError("expected 3 fields, found " + std::to_string(f.size()), lineno);
        Row r{0, 0, 0, lineno};
        if (!parse_integer(f[0], r.week) || r.week < 1) throw ParseError("week must be a positive integer", lineno);
        if (!parse_integer(f[1], r.age) || r.age < 1 || r.age > static_cast<std::int64_t>(kAgeClasses))
            throw ParseError("age_group must be an integer in 1..6", lineno);
        if (!parse_integer(f[2], r.cases) || r.cases < 0)
            throw ParseError("cases must be a nonnegative integer", lineno);
        max_week = std::max(max_week, r.week);
        rows.push_back(r);
    }
    if (rows.empty()) throw GridIncomplete("case series has no data rows");

    const auto weeks = static_cast<std::size_t>(max_week);
    CaseSeries series(weeks);
    std::vector<std::size_t> seen(weeks * kAgeClasses, 0);
    for (const auto& r : rows) {
        const std::size_t w = static_cast<std::size_t>(r.week) - 1, a = static_cast<std::size_t>(r.age) - 1;
        auto& first = seen[w * kAgeClasses + a];
        if (first != 0)
            throw GridIncomplete("duplicate cell (week " + std::to_string(r.week) + ", age_group " +
                                 std::to_string(r.age) + ") on lines " + std::to_string(first) + " and " +
                                 std::to_string(r.line));
        first = r.line;
        series.set(w, a, r.cases);
    }
    std::vector<std::string> missing;
    for (std::size_t w = 0; w < weeks; ++w)
        for (std::size_t a = 0; a < kAgeClasses; ++a)
            if (seen[w * kAgeClasses + a] == 0)
                missing.push_back("(" + std::to_string(w + 1) + ", " + std::to_string(a + 1) + ")");
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " missing (week, age_group) cells:";
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
        if (missing.size() > 20) msg += " ...";
        throw GridIncomplete(msg);
    }
    return series;
}

CaseSeries load_case_series(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open case series " + path.string());
    return parse_case_series(in);
}

void write_case_series(std::ostream& out, const CaseSeries& series) {
    out << "week,age_group,cases\n";
    for (std::size_t w = 0; w < series.weeks(); ++w)
        for (std::size_t a = 0; a < kAgeClasses; ++a) out << w + 1 << ',' << a + 1 << ',' << series.at(w, a) << '\n';
}

void write_case_series(const std::filesystem::path& path, const CaseSeries& series) {
    auto out = open_output(path);
    write_case_series(out, series);
}

// --- configuration ---------------------------------------------------------

ParamVector RunConfig::default_truth() {
    ParamVector p;
    p.b = 0.41;
    p.phi = 7.4;
    p.r = 2.6;
    p.rho = 0.096;
    p.beta.fill(20.0);
    return p;
}

namespace {

std::vector<double> parse_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split(value, ',')) {
        double v;
        if (!parse_double(item, v)) throw ConfigError(key + ": '" + item + "' is not a number");
        out.push_back(v);
    }
    return out;
}

template <class T>
T parse_count(const std::string& key, const std::string& value) {
    T v{};
    if (!parse_integer(value, v)) throw ConfigError(key + ": '" + value + "' is not a nonnegative integer");
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    double v;
    if (!parse_double(value, v) || !std::isfinite(v)) throw ConfigError(key + ": '" + value + "' is not a number");
    return v;
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_exact(v[i]);
    return out;
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "models") {
        models.clear();
        for (const auto& m : split(value, ',')) {
            if (m.empty()) continue;
            models.push_back(model_from_string(m));
        }
    } else if (key == "data") {
        data = value;
    } else if (key == "output") {
        output = value;
    } else if (key == "seed") {
        seed = parse_count<std::uint64_t>(key, value);
    } else if (key == "iterations") {
        iterations = parse_count<std::size_t>(key, value);
    } else if (key == "burn_in") {
        burn_in = parse_count<std::size_t>(key, value);
    } else if (key == "adapt_interval") {
        adapt_interval = parse_count<std::size_t>(key, value);
    } else if (key == "calendar_offset") {
        calendar_offset = parse_count<std::size_t>(key, value);
    } else if (key == "population") {
        population = parse_real(key, value);
    } else if (key == "epsilon") {
        epsilon = parse_real(key, value);
    } else if (key == "max_years") {
        max_years = parse_count<int>(key, value);
    } else if (key == "coverages") {
        coverages = parse_list(key, value);
    } else if (key == "seroconversion") {
        seroconversion = parse_list(key, value);
    } else if (key == "projection_draws") {
        projection_draws = parse_count<std::size_t>(key, value);
    } else if (key == "short_horizon") {
        short_horizon = parse_count<std::size_t>(key, value);
    } else if (key == "long_horizon") {
        long_horizon = parse_count<std::size_t>(key, value);
    } else if (key == "threads") {
        threads = parse_count<std::size_t>(key, value);
    } else if (key == "truth_model") {
        truth_model = model_from_string(value);
    } else if (key == "truth_b") {
        truth.b = parse_real(key, value);
    } else if (key == "truth_phi") {
        truth.phi = parse_real(key, value);
    } else if (key == "truth_r") {
        truth.r = parse_real(key, value);
    } else if (key == "truth_rho") {
        truth.rho = parse_real(key, value);
    } else if (key == "truth_beta") {
        const auto v = parse_list(key, value);
        if (v.size() == 1)
            truth.beta.fill(v[0]);
        else if (v.size() == kAgeClasses)
            std::copy(v.begin(), v.end(), truth.beta.begin());
        else
            throw ConfigError("truth_beta needs one value or six");
    } else if (key == "simulate_weeks") {
        simulate_weeks = parse_count<std::size_t>(key, value);
    } else if (key == "simulate_seed") {
        simulate_seed = parse_count<std::uint64_t>(key, value);
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

void RunConfig::validate() const {
    if (models.empty()) throw ConfigError("models: select at least one model");
    std::set<ModelId> unique(models.begin(), models.end());
    if (unique.size() != models.size()) throw ConfigError("models: a model is listed twice");
    if (data.empty()) throw ConfigError("data: path is empty");
    if (output.empty()) throw ConfigError("output: path is empty");
    if (iterations <= burn_in) throw ConfigError("iterations must exceed burn_in");
    if (adapt_interval == 0) throw ConfigError("adapt_interval must be positive");
    if (calendar_offset >= 52) throw ConfigError("calendar_offset must lie in 0..51");
    if (!(population > 0.0)) throw ConfigError("population must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (max_years < 2) throw ConfigError("max_years must be at least 2");
    if (coverages.empty()) throw ConfigError("coverages: list is empty");
    for (double c : coverages)
        if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("coverages must lie in [0, 1]");
    if (seroconversion.empty()) throw ConfigError("seroconversion: list is empty");
    for (double s : seroconversion)
        if (!(s > 0.0 && s <= 1.0)) throw ConfigError("seroconversion must lie in (0, 1]");
    if (short_horizon == 0) throw ConfigError("short_horizon must be positive");
    if (long_horizon < 52) throw ConfigError("long_horizon must be at least 52 weeks");
    if (!truth.in_support()) throw ConfigError("truth_* parameters lie outside their support");
    if (simulate_weeks == 0) throw ConfigError("simulate_weeks must be positive");
}

std::string RunConfig::to_text() const {
    std::string m;
    for (std::size_t i = 0; i < models.size(); ++i) m += (i ? "," : "") + std::string(1, to_char(models[i]));
    std::vector<double> beta(truth.beta.begin(), truth.beta.end());
    std::ostringstream out;
    out << "models=" << m << '\n'
        << "data=" << data << '\n'
        << "output=" << output << '\n'
        << "seed=" << seed << '\n'
        << "iterations=" << iterations << '\n'
        << "burn_in=" << burn_in << '\n'
        << "adapt_interval=" << adapt_interval << '\n'
        << "calendar_offset=" << calendar_offset << '\n'
        << "population=" << format_exact(population) << '\n'
        << "epsilon=" << format_exact(epsilon) << '\n'
        << "max_years=" << max_years << '\n'
        << "coverages=" << join(coverages) << '\n'
        << "seroconversion=" << join(seroconversion) << '\n'
        << "projection_draws=" << projection_draws << '\n'
        << "short_horizon=" << short_horizon << '\n'
        << "long_horizon=" << long_horizon << '\n'
        << "threads=" << threads << '\n'
        << "truth_model=" << to_char(truth_model) << '\n'
        << "truth_b=" << format_exact(truth.b) << '\n'
        << "truth_phi=" << format_exact(truth.phi) << '\n'
        << "truth_r=" << format_exact(truth.r) << '\n'
        << "truth_rho=" << format_exact(truth.rho) << '\n'
        << "truth_beta=" << join(beta) << '\n'
        << "simulate_weeks=" << simulate_weeks << '\n'
        << "simulate_seed=" << simulate_seed << '\n';
    return out.str();
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    config.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(std::istream& in) {
    RunConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
        try {
            config.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration " + path.string());
    return parse_config(in);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// --- numeric text ----------------------------------------------------------

std::string format_exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_number(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// --- chains ----------------------------------------------------------------

void write_chain(const std::filesystem::path& path, const PosteriorChain& chain) {
    {
        auto out = open_output(path);
        const auto& names = ParamVector::names();
        for (const auto& n : names) out << n << ',';
        out << "log_posterior\n";
        for (std::size_t i = 0; i < chain.samples.size(); ++i) {
            for (double v : chain.samples[i].to_array()) out << format_exact(v) << ',';
            out << format_exact(chain.log_posteriors[i]) << '\n';
        }
    }
    std::vector<std::pair<std::string, std::string>> meta{
        {"model", std::string(1, to_char(chain.model))},
        {"seed", std::to_string(chain.seed)},
        {"iterations", std::to_string(chain.iterations)},
        {"burn_in", std::to_string(chain.burn_in)},
        {"observations", std::to_string(chain.observations)},
        {"acceptance_rate", format_exact(chain.acceptance_rate)},
        {"failed_evaluations", std::to_string(chain.failed_evaluations)},
    };
    for (std::size_t k = 0; k < ParamVector::kSize; ++k) {
        const std::string n(ParamVector::names()[k]);
        meta.emplace_back("acceptance_" + n, format_exact(chain.component_acceptance[k]));
        meta.emplace_back("scale_" + n, format_exact(chain.proposal_scales[k]));
    }
    auto meta_path = path;
    meta_path += ".meta";
    write_key_values(meta_path, meta);
}

PosteriorChain load_chain(const std::filesystem::path& path, const PriorSpec& priors) {
    auto meta_path = path;
    meta_path += ".meta";
    if (!std::filesystem::exists(path)) throw MissingArtifact("chain file " + path.string() + " not found");
    const auto meta = read_key_values(meta_path);
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = meta.find(key);
        if (it == meta.end()) throw MissingArtifact(meta_path.string() + " lacks " + key);
        return it->second;
    };
    PosteriorChain chain;
    chain.model = model_from_string(need("model"));
    chain.seed = parse_count<std::uint64_t>("seed", need("seed"));
    chain.iterations = parse_count<std::size_t>("iterations", need("iterations"));
    chain.burn_in = parse_count<std::size_t>("burn_in", need("burn_in"));
    chain.observations = parse_count<std::size_t>("observations", need("observations"));
    chain.acceptance_rate = parse_real("acceptance_rate", need("acceptance_rate"));
    chain.failed_evaluations = parse_count<std::size_t>("failed_evaluations", need("failed_evaluations"));
    for (std::size_t k = 0; k < ParamVector::kSize; ++k) {
        const std::string n(ParamVector::names()[k]);
        chain.component_acceptance[k] = parse_real("acceptance_" + n, need("acceptance_" + n));
        chain.proposal_scales[k] = parse_real("scale_" + n, need("scale_" + n));
    }

    auto in = open_input(path);
    std::string line;
    std::size_t lineno = 1;
    std::string expected;
    for (const auto& n : ParamVector::names()) expected += std::string(n) + ",";
    expected += "log_posterior";
    if (!std::getline(in, line) || trim(line) != expected) throw ParseError("chain header must be " + expected, 1);
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != ParamVector::kSize + 1) throw ParseError("expected 11 fields", lineno);
        std::array<double, ParamVector::kSize> v{};
        for (std::size_t k = 0; k < ParamVector::kSize; ++k)
            if (!parse_double(f[k], v[k])) throw ParseError("field " + std::to_string(k + 1) + " is not a number", lineno);
        double lp;
        if (!parse_double(f.back(), lp)) throw ParseError("log_posterior is not a number", lineno);
        const auto p = ParamVector::from_array(v);
        chain.samples.push_back(p);
        chain.log_posteriors.push_back(lp);
        chain.log_likelihoods.push_back(lp - log_prior(p, priors));
    }
    return chain;
}

// --- tables ----------------------------------------------------------------

void Table::add(std::vector<std::string> row) {
    if (row.size() != header.size())
        throw ShapeMismatch("row has " + std::to_string(row.size()) + " fields, header has " +
                            std::to_string(header.size()));
    rows.push_back(std::move(row));
}

void Table::write(const std::filesystem::path& path) const {
    auto out = open_output(path);
    auto line = [&out](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
}

Table Table::read(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact(path.string() + " not found");
    auto in = open_input(path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty table " + path.string(), 1);
    t.header = split(line, ',');
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split(line, ',');
        if (f.size() != t.header.size()) throw ParseError(path.string() + ": wrong field count", lineno);
        t.rows.push_back(std::move(f));
    }
    return t;
}

std::size_t Table::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingArtifact("table lacks column " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
}

void write_key_values(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    auto out = open_output(path);
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact(path.string() + " not found");
    auto in = open_input(path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(path.string() + ": expected key=value", lineno);
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

Table summary_table(const PosteriorSummary& summary) {
    Table t{{"parameter", "mean", "hpd95_lower", "hpd95_upper"}, {}};
    for (std::size_t k = 0; k < ParamVector::kSize; ++k)
        t.add({std::string(ParamVector::names()[k]), format_number(summary.mean[k]),
               format_number(summary.hpd95[k].lower), format_number(summary.hpd95[k].upper)});
    return t;
}

Table evidence_table(const std::vector<ModelEvidence>& evidences) {
    Table t{{"model", "max_log_likelihood", "k", "n", "bic", "pmp"}, {}};
    for (const auto& e : evidences)
        t.add({std::string(1, to_char(e.model)), format_number(e.max_log_likelihood, 12), std::to_string(e.parameters),
               std::to_string(e.observations), format_number(e.bic, 12), format_number(e.pmp, 12)});
    return t;
}

} // namespace rotaens
