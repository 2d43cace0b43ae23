#include "rotaens/pipeline.hpp"

#include "rotaens/errors.hpp"
#include "rotaens/parallel.hpp"

#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

namespace rotaens {

namespace fs = std::filesystem;

namespace {

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    void operator()(const std::string& msg) const {
        if (!out_) return;
        std::lock_guard lock(mutex_);
        *out_ << msg << std::endl;
    }

private:
    std::ostream* out_;
    mutable std::mutex mutex_;
};

std::string model_name(ModelId m) { return std::string(1, to_char(m)); }

PeriodicOptions periodic_options(const RunConfig& config) {
    PeriodicOptions p;
    p.population = config.population;
    p.epsilon = config.epsilon;
    p.max_years = config.max_years;
    return p;
}

fs::path out_dir(const RunConfig& config) { return fs::path(config.output); }

template <class F>
void run_stage(const std::string& stage, F&& body) {
    try {
        body();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(stage, e.what());
    }
}

std::vector<double> pmps_for(const RunConfig& config) {
    const Table ev = Table::read(out_dir(config) / "evidence.csv");
    const std::size_t mcol = ev.column("model"), pcol = ev.column("pmp");
    std::vector<double> w;
    for (ModelId m : config.models) {
        bool found = false;
        for (const auto& row : ev.rows)
            if (row[mcol] == model_name(m)) {
                w.push_back(std::stod(row[pcol]));
                found = true;
            }
        if (!found) throw MissingArtifact("evidence.csv has no row for model " + model_name(m));
    }
    // the table carries 12 significant digits; renormalise so the weights sum to one
    double total = 0.0;
    for (double x : w) total += x;
    for (double& x : w) x /= total;
    return w;
}

} // namespace

std::size_t resolve_threads(std::size_t flag, const RunConfig& config) {
    if (flag > 0) return flag;
    if (config.threads > 0) return config.threads;
    return default_thread_count();
}

CaseSeries simulate_dataset(const RunConfig& config) {
    config.validate();
    const ModelSpec spec(config.truth_model);
    const auto sol = find_periodic_solution(spec, config.truth, AgeStructure::standard(), BirthSchedule::standard(),
                                            periodic_options(config));
    const Eigen::MatrixXd expected = tile_profile(sol.expected_profile, config.simulate_weeks, config.calendar_offset);
    return simulate_observations(expected, config.truth.r, config.simulate_seed);
}

fs::path chain_path(const RunConfig& config, ModelId model) {
    return out_dir(config) / "chains" / ("chain_" + model_name(model) + ".csv");
}

std::string scenario_label(double seroconversion) { return "s" + format_number(seroconversion, 6); }

void stage_fit(const RunConfig& config, const PipelineOptions& options) {
    const Logger log(options.log);
    CaseSeries series;
    run_stage("fit", [&] {
        config.validate();
        series = load_case_series(config.data);
    });
    const std::size_t n = config.models.size();
    // the worker budget is shared between models; chains themselves are serial
    std::vector<std::string> errors(n);
    parallel_for(n, options.threads, [&](std::size_t k) {
        const ModelId m = config.models[k];
        try {
            McmcConfig mc;
            mc.iterations = config.iterations;
            mc.burn_in = config.burn_in;
            mc.seed = config.seed;
            mc.adapt_interval = config.adapt_interval;
            const std::size_t step = std::max<std::size_t>(1, config.iterations / 10);
            mc.progress = [&log, m, step, total = config.iterations](std::size_t it) {
                if ((it + 1) % step == 0)
                    log("fit " + model_name(m) + ": " + std::to_string(it + 1) + "/" + std::to_string(total));
            };
            PosteriorOptions po;
            po.calendar_offset = config.calendar_offset;
            po.population = config.population;
            po.periodic = periodic_options(config);
            po.diagnostics = [&log, m](const std::string& msg) { log("fit " + model_name(m) + ": " + msg); };
            const auto chain = run_mcmc(ModelSpec(m), series, mc, po);
            write_chain(chain_path(config, m), chain);
            log("fit " + model_name(m) + ": acceptance " + format_number(chain.acceptance_rate, 4));
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    });
    for (std::size_t k = 0; k < n; ++k)
        if (!errors[k].empty()) throw PipelineError("fit " + model_name(config.models[k]), errors[k]);
}

void stage_summarize(const RunConfig& config, const PipelineOptions& options) {
    const Logger log(options.log);
    for (ModelId m : config.models) {
        run_stage("summarize " + model_name(m), [&] {
            const auto summary = posterior_summary(load_chain(chain_path(config, m)));
            summary_table(summary).write(out_dir(config) / ("summary_" + model_name(m) + ".csv"));
            for (const auto& w : summary.warnings) log("summarize " + model_name(m) + ": " + w);
        });
    }
}

void stage_bma(const RunConfig& config, const PipelineOptions& options) {
    const Logger log(options.log);
    run_stage("bma", [&] {
        config.validate();
        const CaseSeries series = load_case_series(config.data);
        const std::size_t weeks = series.weeks();
        const std::size_t nm = config.models.size();
        const AgeStructure ages = AgeStructure::standard();
        const BirthSchedule births = BirthSchedule::standard();

        std::vector<ModelEvidence> evidence;
        std::vector<std::vector<ParamVector>> draws(nm);
        for (std::size_t k = 0; k < nm; ++k) {
            const auto chain = load_chain(chain_path(config, config.models[k]));
            evidence.push_back(evidence_from_summary(posterior_summary(chain)));
            draws[k] = thin_draws(chain.samples, config.projection_draws);
        }
        assign_model_probabilities(evidence);
        evidence_table(evidence).write(out_dir(config) / "evidence.csv");
        std::vector<double> pmp;
        for (const auto& e : evidence) pmp.push_back(e.pmp);

        // per (model, draw): burden, R0, reported profile over the window, severe calendar profile
        struct DrawResult {
            double burden = 0.0, r0 = 0.0;
            Eigen::VectorXd reported, severe;
        };
        std::vector<std::pair<std::size_t, std::size_t>> jobs;
        for (std::size_t k = 0; k < nm; ++k)
            for (std::size_t d = 0; d < draws[k].size(); ++d) jobs.emplace_back(k, d);
        std::vector<DrawResult> results(jobs.size());
        parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
            const auto [k, d] = jobs[j];
            const ModelSpec spec(config.models[k]);
            const ParamVector& p = draws[k][d];
            const auto sol = periodic_dynamics(spec, p, ages, births, periodic_options(config));
            const Eigen::MatrixXd severe = severe_incidence(spec, sol.cycle);
            DrawResult& r = results[j];
            r.burden = burden_percent(spec, sol);
            r.r0 = next_generation_matrix(spec, p, ages, births).spectral_radius;
            r.severe = severe.colwise().sum().transpose();
            r.reported = p.rho * tile_profile(severe, weeks, config.calendar_offset).colwise().sum().transpose();
        });
        log("bma: evaluated " + std::to_string(jobs.size()) + " posterior draws");

        std::vector<std::vector<double>> burden(nm), r0(nm);
        std::vector<Eigen::MatrixXd> reported(nm), severe(nm);
        for (std::size_t k = 0; k < nm; ++k) {
            reported[k].resize(static_cast<Eigen::Index>(draws[k].size()), static_cast<Eigen::Index>(weeks));
            severe[k].resize(static_cast<Eigen::Index>(draws[k].size()), 52);
        }
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const auto [k, d] = jobs[j];
            burden[k].push_back(results[j].burden);
            r0[k].push_back(results[j].r0);
            reported[k].row(static_cast<Eigen::Index>(d)) = results[j].reported.transpose();
            severe[k].row(static_cast<Eigen::Index>(d)) = results[j].severe.transpose();
        }

        Table ens{{"model", "burden_mean", "burden_lower95", "burden_upper95", "r0_mean", "r0_lower95", "r0_upper95",
                   "pmp"},
                  {}};
        auto add_row = [&](const std::string& name, const BmaEstimate& b, const BmaEstimate& r, double w) {
            ens.add({name, format_number(b.point), format_number(b.interval.lower), format_number(b.interval.upper),
                     format_number(r.point), format_number(r.interval.lower), format_number(r.interval.upper),
                     format_number(w, 12)});
        };
        const double one[] = {1.0};
        for (std::size_t k = 0; k < nm; ++k)
            add_row(model_name(config.models[k]), bma_combine_scalar({burden[k]}, one),
                    bma_combine_scalar({r0[k]}, one), pmp[k]);
        add_row("BMA", bma_combine_scalar(burden, pmp), bma_combine_scalar(r0, pmp), 1.0);
        ens.write(out_dir(config) / "ensemble.csv");

        Table prof{{"model", "series", "week", "mean", "lower95", "upper95"}, {}};
        auto add_profile = [&](const std::string& name, const std::string& kind,
                               const std::vector<BmaEstimate>& est) {
            for (std::size_t t = 0; t < est.size(); ++t)
                prof.add({name, kind, std::to_string(t + 1), format_number(est[t].point),
                          format_number(est[t].interval.lower), format_number(est[t].interval.upper)});
        };
        for (std::size_t t = 0; t < weeks; ++t) {
            double total = 0.0;
            for (std::size_t a = 0; a < kAgeClasses; ++a) total += static_cast<double>(series.at(t, a));
            prof.add({"data", "reported", std::to_string(t + 1), format_number(total), format_number(total),
                      format_number(total)});
        }
        for (std::size_t k = 0; k < nm; ++k) {
            add_profile(model_name(config.models[k]), "reported", bma_combine_profile({reported[k]}, one));
            add_profile(model_name(config.models[k]), "severe", bma_combine_profile({severe[k]}, one));
        }
        add_profile("BMA", "reported", bma_combine_profile(reported, pmp));
        add_profile("BMA", "severe", bma_combine_profile(severe, pmp));
        prof.write(out_dir(config) / "profiles.csv");
    });
}

void stage_project(const RunConfig& config, const PipelineOptions& options) {
    const Logger log(options.log);
    run_stage("project", [&] {
        config.validate();
        const std::size_t nm = config.models.size();
        const auto pmp = pmps_for(config);
        std::vector<std::vector<ParamVector>> draws(nm);
        for (std::size_t k = 0; k < nm; ++k)
            draws[k] = thin_draws(load_chain(chain_path(config, config.models[k])).samples, config.projection_draws);
        const fs::path dir = out_dir(config) / "impact";

        for (double s : config.seroconversion) {
            const std::string label = scenario_label(s);
            ImpactOptions io;
            io.coverages = config.coverages;
            io.seroconversion = s;
            io.short_horizon_weeks = config.short_horizon;
            io.long_horizon_weeks = config.long_horizon;
            io.periodic = periodic_options(config);
            io.threads = options.threads;
            std::vector<std::vector<ImpactResult>> per_model(nm);
            for (std::size_t k = 0; k < nm; ++k) {
                const ModelId m = config.models[k];
                per_model[k] = vaccination_impact(ModelSpec(m), draws[k], AgeStructure::standard(),
                                                  BirthSchedule::standard(), io);
                log("project " + model_name(m) + " " + label + ": done");
            }

            const std::size_t nc = config.coverages.size();
            for (std::size_t k = 0; k <= nm; ++k) {
                const bool bma = k == nm;
                const std::string name = bma ? "BMA" : model_name(config.models[k]);
                Table impact{{"coverage", "percent_reduction", "lower99", "upper99", "absolute_reduction",
                              "hpd_lower99", "hpd_upper99", "absolute_lower99", "absolute_upper99"},
                             {}};
                Table relative{{"coverage", "week", "relative", "lower99", "upper99"}, {}};
                Table agedist{{"coverage", "scenario", "age_group", "proportion"}, {}};
                Table peaks{{"coverage", "year", "peak", "baseline_peak"}, {}};
                for (std::size_t c = 0; c < nc; ++c) {
                    const std::string cov = format_number(config.coverages[c], 6);
                    if (!bma) {
                        const ImpactResult& r = per_model[k][c];
                        impact.add({cov, format_number(r.percent_reduction), format_number(r.percent_quantile.lower),
                                    format_number(r.percent_quantile.upper), format_number(r.absolute_reduction),
                                    format_number(r.percent_hpd.lower), format_number(r.percent_hpd.upper),
                                    format_number(r.absolute_quantile.lower),
                                    format_number(r.absolute_quantile.upper)});
                        for (std::size_t t = 0; t < r.relative_incidence.size(); ++t)
                            relative.add({cov, std::to_string(t + 1), format_number(r.relative_incidence[t]),
                                          format_number(r.relative_lower[t]), format_number(r.relative_upper[t])});
                        for (std::size_t a = 0; a < kAgeClasses; ++a) {
                            agedist.add({cov, "baseline", std::to_string(a + 1),
                                         format_number(r.age_distribution_baseline[a])});
                            agedist.add({cov, "vaccinated", std::to_string(a + 1),
                                         format_number(r.age_distribution_vaccinated[a])});
                        }
                        for (std::size_t y = 0; y < r.yearly_peaks.size(); ++y)
                            peaks.add({cov, std::to_string(y + 1), format_number(r.yearly_peaks[y]),
                                       format_number(r.baseline_peak)});
                        continue;
                    }
                    std::vector<std::vector<double>> pct(nm), absl(nm);
                    for (std::size_t j = 0; j < nm; ++j) {
                        pct[j] = per_model[j][c].percent_draws;
                        absl[j] = per_model[j][c].absolute_draws;
                    }
                    const auto p = bma_combine_scalar(pct, pmp, 0.99);
                    const auto a = bma_combine_scalar(absl, pmp, 0.99);
                    impact.add({cov, format_number(p.point), format_number(p.interval.lower),
                                format_number(p.interval.upper), format_number(a.point), "", "",
                                format_number(a.interval.lower), format_number(a.interval.upper)});
                    std::vector<Eigen::MatrixXd> rel(nm);
                    for (std::size_t j = 0; j < nm; ++j) {
                        const auto& rd = per_model[j][c].relative_draws;
                        rel[j].resize(static_cast<Eigen::Index>(rd.size()), static_cast<Eigen::Index>(config.short_horizon));
                        for (std::size_t d = 0; d < rd.size(); ++d)
                            for (std::size_t t = 0; t < config.short_horizon; ++t)
                                rel[j](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = rd[d][t];
                    }
                    const auto rel_bma = bma_combine_profile(rel, pmp, 0.99);
                    for (std::size_t t = 0; t < rel_bma.size(); ++t)
                        relative.add({cov, std::to_string(t + 1), format_number(rel_bma[t].point),
                                      format_number(rel_bma[t].interval.lower),
                                      format_number(rel_bma[t].interval.upper)});
                    for (std::size_t ag = 0; ag < kAgeClasses; ++ag) {
                        double before = 0.0, after = 0.0;
                        for (std::size_t j = 0; j < nm; ++j) {
                            before += pmp[j] * per_model[j][c].age_distribution_baseline[ag];
                            after += pmp[j] * per_model[j][c].age_distribution_vaccinated[ag];
                        }
                        agedist.add({cov, "baseline", std::to_string(ag + 1), format_number(before)});
                        agedist.add({cov, "vaccinated", std::to_string(ag + 1), format_number(after)});
                    }
                    const std::size_t years = per_model[0][c].yearly_peaks.size();
                    double base_peak = 0.0;
                    for (std::size_t j = 0; j < nm; ++j) base_peak += pmp[j] * per_model[j][c].baseline_peak;
                    for (std::size_t y = 0; y < years; ++y) {
                        double peak = 0.0;
                        for (std::size_t j = 0; j < nm; ++j) peak += pmp[j] * per_model[j][c].yearly_peaks[y];
                        peaks.add({cov, std::to_string(y + 1), format_number(peak), format_number(base_peak)});
                    }
                }
                const std::string suffix = name + "_" + label + ".csv";
                impact.write(dir / ("impact_" + suffix));
                relative.write(dir / ("relative_" + suffix));
                agedist.write(dir / ("ages_" + suffix));
                peaks.write(dir / ("peaks_" + suffix));
            }
        }
    });
}

void emit_plot_tables(const RunConfig& config) {
    const fs::path out = out_dir(config);
    const fs::path dir = out / "tables";
    std::vector<std::string> names;
    for (ModelId m : config.models) names.push_back(model_name(m));
    names.push_back("BMA");

    // weekly profiles and burden: straight copies with stable names
    Table::read(out / "profiles.csv").write(dir / "fig_profiles.csv");
    Table::read(out / "ensemble.csv").write(dir / "fig_burden.csv");

    Table ages{{"model", "seroconversion", "coverage", "scenario", "age_group", "proportion"}, {}};
    Table rel{{"model", "seroconversion", "coverage", "week", "relative", "lower99", "upper99"}, {}};
    Table red{{"model", "seroconversion", "coverage", "percent_reduction", "lower99", "upper99", "absolute_reduction"},
              {}};
    Table peaks{{"model", "seroconversion", "coverage", "year", "peak", "baseline_peak"}, {}};
    for (double s : config.seroconversion) {
        const std::string label = scenario_label(s);
        const std::string sv = format_number(s, 6);
        for (const auto& name : names) {
            const std::string suffix = name + "_" + label + ".csv";
            const Table a = Table::read(out / "impact" / ("ages_" + suffix));
            for (const auto& r : a.rows) ages.add({name, sv, r[0], r[1], r[2], r[3]});
            const Table rr = Table::read(out / "impact" / ("relative_" + suffix));
            for (const auto& r : rr.rows) rel.add({name, sv, r[0], r[1], r[2], r[3], r[4]});
            const Table im = Table::read(out / "impact" / ("impact_" + suffix));
            for (const auto& r : im.rows) red.add({name, sv, r[0], r[1], r[2], r[3], r[4]});
            const Table pk = Table::read(out / "impact" / ("peaks_" + suffix));
            for (const auto& r : pk.rows) peaks.add({name, sv, r[0], r[1], r[2], r[3]});
        }
    }
    ages.write(dir / "fig_age_distribution.csv");
    rel.write(dir / "fig_relative_incidence.csv");
    red.write(dir / "fig_reduction.csv");
    peaks.write(dir / "fig_peaks.csv");
}

void write_manifest(const RunConfig& config) {
    // the hash covers only settings that can change numbers
    RunConfig numeric = config;
    numeric.output.clear();
    numeric.threads = 0;
    const std::string text = config.to_text();
    std::string data_hash = "missing";
    {
        std::ifstream in(config.data, std::ios::binary);
        if (in) {
            std::ostringstream ss;
            ss << in.rdbuf();
            data_hash = hex64(fnv1a64(ss.str()));
        }
    }
    std::string models;
    for (std::size_t i = 0; i < config.models.size(); ++i) models += (i ? "," : "") + model_name(config.models[i]);
    write_key_values(out_dir(config) / "manifest.txt", {{"tool", "rotaens"},
                                                        {"version", std::string(kToolVersion)},
                                                        {"seed", std::to_string(config.seed)},
                                                        {"config_hash", hex64(fnv1a64(numeric.to_text()))},
                                                        {"data", config.data},
                                                        {"data_hash", data_hash},
                                                        {"models", models}});
    std::ofstream(out_dir(config) / "config.txt", std::ios::binary) << text;
}

void run_pipeline(const RunConfig& config, const PipelineOptions& options) {
    run_stage("config", [&] {
        config.validate();
        fs::create_directories(out_dir(config));
    });
    run_stage("manifest", [&] { write_manifest(config); });
    stage_fit(config, options);
    stage_summarize(config, options);
    stage_bma(config, options);
    stage_project(config, options);
    run_stage("tables", [&] { emit_plot_tables(config); });
}

} // namespace rotaens
