#include "fgam/csvio.hpp"

#include "fgam/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fgam {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::string& file, long line, const std::string& col) {
    const char* p = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p || *end != '\0' || s.empty())
        throw DataError(file + ":" + std::to_string(line) + ": non-numeric value '" + s + "' in column " + col);
    return v;
}

} // namespace

SparseFunctionalDataset load_dataset(const std::string& obs_path, const std::string& resp_path) {
    std::ifstream obs(obs_path);
    if (!obs) throw DataError("cannot open observation file '" + obs_path + "'");
    std::ifstream resp(resp_path);
    if (!resp) throw DataError("cannot open response file '" + resp_path + "'");

    std::string line;
    long lineno = 0;

    // observations keyed by subject
    struct ObsList {
        std::vector<double> t, x;
        long order = 0;
    };
    std::map<std::string, ObsList> obs_map;
    long obs_order = 0;
    if (!std::getline(obs, line)) throw DataError(obs_path + ": empty file");
    ++lineno;
    if (split_csv(line) != std::vector<std::string>{"subject_id", "t", "value"})
        throw DataError(obs_path + ":1: expected header 'subject_id,t,value'");
    while (std::getline(obs, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 3)
            throw DataError(obs_path + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                            std::to_string(f.size()));
        const double t = parse_number(f[1], obs_path, lineno, "t");
        const double v = parse_number(f[2], obs_path, lineno, "value");
        auto [it, inserted] = obs_map.try_emplace(f[0]);
        if (inserted) it->second.order = obs_order++;
        for (double existing : it->second.t)
            if (existing == t)
                throw DataError(obs_path + ":" + std::to_string(lineno) + ": duplicate (subject, t) row for '" +
                                f[0] + "' at t=" + f[1]);
        it->second.t.push_back(t);
        it->second.x.push_back(v);
    }

    // responses; an empty y field marks a prediction target
    struct RespRow {
        double y;
        bool has_y;
        Eigen::VectorXd u;
        long order;
    };
    std::map<std::string, RespRow> resp_map;
    long resp_order = 0;
    lineno = 0;
    if (!std::getline(resp, line)) throw DataError(resp_path + ": empty file");
    ++lineno;
    auto rh = split_csv(line);
    if (rh.size() < 2 || rh[0] != "subject_id" || rh[1] != "y")
        throw DataError(resp_path + ":1: expected header 'subject_id,y[,u1,...]'");
    const int n_u = static_cast<int>(rh.size()) - 2;
    while (std::getline(resp, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (static_cast<int>(f.size()) != 2 + n_u)
            throw DataError(resp_path + ":" + std::to_string(lineno) + ": expected " + std::to_string(2 + n_u) +
                            " fields, got " + std::to_string(f.size()));
        if (resp_map.count(f[0]))
            throw DataError(resp_path + ":" + std::to_string(lineno) + ": duplicate subject '" + f[0] + "'");
        RespRow row;
        row.has_y = !f[1].empty();
        row.y = row.has_y ? parse_number(f[1], resp_path, lineno, "y") : 0.0;
        row.u.resize(1 + n_u);
        row.u[0] = 1.0; // intercept
        for (int k = 0; k < n_u; ++k) row.u[1 + k] = parse_number(f[2 + k], resp_path, lineno, rh[2 + k]);
        row.order = resp_order++;
        resp_map.emplace(f[0], std::move(row));
    }

    for (const auto& [id, row] : resp_map)
        if (!obs_map.count(id))
            throw DataError(resp_path + ": subject '" + id + "' has a response but zero observations");

    SparseFunctionalDataset data;
    data.p0 = 1 + n_u;

    // subjects with responses first (response-file order), then obs-only ones
    std::vector<std::pair<long, std::string>> with_resp, without_resp;
    for (const auto& [id, o] : obs_map) {
        if (resp_map.count(id))
            with_resp.push_back({resp_map.at(id).order, id});
        else
            without_resp.push_back({o.order, id});
    }
    std::sort(with_resp.begin(), with_resp.end());
    std::sort(without_resp.begin(), without_resp.end());

    auto add_subject = [&](const std::string& id, bool has_resp) {
        const ObsList& o = obs_map.at(id);
        Subject s;
        s.id = id;
        std::vector<int> perm(o.t.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
        std::sort(perm.begin(), perm.end(), [&](int a, int b) { return o.t[a] < o.t[b]; });
        s.t.resize(perm.size());
        s.x.resize(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            s.t[i] = o.t[perm[i]];
            s.x[i] = o.x[perm[i]];
        }
        if (has_resp) {
            const RespRow& row = resp_map.at(id);
            s.y = row.y;
            s.u = row.u;
            s.has_response = row.has_y;
        } else {
            s.y = 0.0;
            s.u = Eigen::VectorXd::Zero(data.p0);
            s.u[0] = 1.0;
            s.has_response = false;
        }
        data.subjects.push_back(std::move(s));
    };
    for (const auto& [ord, id] : with_resp) add_subject(id, true);
    for (const auto& [ord, id] : without_resp) add_subject(id, false);
    return data;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) : path_(path), tmp_(path + ".tmp") {}

CsvWriter::~CsvWriter() {
    if (!committed_) std::remove(tmp_.c_str());
}

void CsvWriter::header(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += names[i];
    }
    buf_ += '\n';
    first_ = true;
}

void CsvWriter::field(const std::string& s) {
    if (!first_) buf_ += ',';
    buf_ += s;
    first_ = false;
}

void CsvWriter::field(double v) { field(format_double(v)); }

void CsvWriter::field(long v) { field(std::to_string(v)); }

void CsvWriter::end_row() {
    buf_ += '\n';
    first_ = true;
}

void CsvWriter::commit() {
    write_text_atomic(path_, buf_);
    committed_ = true;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp + "'");
        out << content;
        if (!out) throw DataError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

namespace {

// mean curve for one subject under a draw matrix of scores
Eigen::MatrixXd mean_trajectories(const SurfaceModel& model, const std::vector<Eigen::MatrixXd>& Xi) {
    const int N = model.n_subjects();
    Eigen::MatrixXd out(N, model.grid().t.size());
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd xi = Eigen::VectorXd::Zero(model.M());
        for (const auto& d : Xi) xi += d.row(i).transpose();
        xi /= static_cast<double>(Xi.size());
        out.row(i) = model.trajectory(xi).transpose();
    }
    return out;
}

void write_surface(const std::string& path, const SurfaceModel& model, const Eigen::VectorXd& theta_mean,
                   const Eigen::MatrixXd& theta_cov, const Eigen::MatrixXd& trajs) {
    CsvWriter w(path);
    w.header({"x", "t", "estimate", "sd"});
    Eigen::VectorXd xa = Eigen::VectorXd::LinSpaced(40, trajs.minCoeff(), trajs.maxCoeff());
    Eigen::VectorXd ta = Eigen::VectorXd::LinSpaced(40, model.grid().t[0], model.grid().t[model.grid().t.size() - 1]);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
            Eigen::VectorXd b = model.surface_basis_row(xa[i], ta[j]);
            const double est = b.dot(theta_mean);
            const double var = b.dot(theta_cov * b);
            w.field(xa[i]);
            w.field(ta[j]);
            w.field(est);
            w.field(std::sqrt(std::max(0.0, var)));
            w.end_row();
        }
    w.commit();
}

void write_trajectories(const std::string& path, const SurfaceModel& model,
                        const SparseFunctionalDataset& data, const Eigen::MatrixXd& trajs) {
    CsvWriter w(path);
    w.header({"subject_id", "t", "value"});
    for (int i = 0; i < trajs.rows(); ++i)
        for (int r = 0; r < trajs.cols(); ++r) {
            w.field(data.subjects[i].id);
            w.field(model.grid().t[r]);
            w.field(trajs(i, r));
            w.end_row();
        }
    w.commit();
}

} // namespace

void export_fpca_artifacts(const FpcaResult& fpca, const SparseFunctionalDataset& data,
                           const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    {
        CsvWriter w(outdir + "/mean.csv");
        w.header({"t", "mu"});
        for (int r = 0; r < fpca.grid.t.size(); ++r) {
            w.field(fpca.grid.t[r]);
            w.field(fpca.mu[r]);
            w.end_row();
        }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/eigenfunctions.csv");
        w.header({"t", "component", "phi", "nu"});
        for (int m = 0; m < fpca.nu.size(); ++m)
            for (int r = 0; r < fpca.grid.t.size(); ++r) {
                w.field(fpca.grid.t[r]);
                w.field(static_cast<long>(m + 1));
                w.field(fpca.Phi(r, m));
                w.field(fpca.nu[m]);
                w.end_row();
            }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/scores.csv");
        w.header({"subject_id", "component", "score"});
        for (int i = 0; i < fpca.scores.rows(); ++i)
            for (int m = 0; m < fpca.scores.cols(); ++m) {
                w.field(data.subjects[i].id);
                w.field(static_cast<long>(m + 1));
                w.field(fpca.scores(i, m));
                w.end_row();
            }
        w.commit();
    }
    {
        std::string log;
        log += "sigma_x2: " + format_double(fpca.sigma_x2) + "\n";
        log += "components: " + std::to_string(fpca.nu.size()) + "\n";
        log += "pve: " + format_double(fpca.pve) + "\n";
        log += "noise_floored: " + std::string(fpca.noise_floored ? "yes" : "no") + "\n";
        log += "ill_conditioned: " + std::string(fpca.ill_conditioned ? "yes" : "no") + "\n";
        write_text_atomic(outdir + "/pace_log.txt", log);
    }
}

void export_mcmc_artifacts(const PosteriorSamples& samples, const SurfaceModel& model,
                           const SparseFunctionalDataset& data, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    const int D = samples.draws();
    const int N = model.n_subjects();

    {
        CsvWriter w(outdir + "/samples.csv");
        w.header({"iter", "param", "value"});
        auto row = [&](long iter, const std::string& name, double v) {
            w.field(iter);
            w.field(name);
            w.field(v);
            w.end_row();
        };
        for (int d = 0; d < D; ++d) {
            const long iter = samples.burnin + static_cast<long>(d) * samples.thin;
            for (int k = 0; k < samples.eta0.cols(); ++k) row(iter, "eta0[" + std::to_string(k) + "]", samples.eta0(d, k));
            for (int k = 0; k < samples.beta.cols(); ++k) row(iter, "beta[" + std::to_string(k) + "]", samples.beta(d, k));
            for (int k = 0; k < samples.delta.cols(); ++k) row(iter, "delta[" + std::to_string(k) + "]", samples.delta(d, k));
            row(iter, "lambda_x", samples.lambda_x[d]);
            row(iter, "lambda_t", samples.lambda_t[d]);
            row(iter, "sigma2", samples.sigma2[d]);
            row(iter, "sigma_x2", samples.sigma_x2[d]);
            for (int i = 0; i < N; ++i)
                for (int m = 0; m < model.M(); ++m)
                    row(iter, "xi[" + data.subjects[i].id + "][" + std::to_string(m + 1) + "]", samples.Xi[d](i, m));
        }
        w.commit();
    }

    Eigen::MatrixXd trajs = mean_trajectories(model, samples.Xi);
    // theta draws for the surface mean/SD
    Eigen::MatrixXd theta_draws(D, model.K());
    for (int d = 0; d < D; ++d)
        theta_draws.row(d) =
            model.reparam().reconstruct_theta(samples.beta.row(d).transpose(), samples.delta.row(d).transpose()).transpose();
    Eigen::VectorXd theta_mean = theta_draws.colwise().mean().transpose();
    Eigen::MatrixXd centered = theta_draws.rowwise() - theta_mean.transpose();
    Eigen::MatrixXd theta_cov = centered.transpose() * centered / std::max(1, D - 1);

    write_surface(outdir + "/surface.csv", model, theta_mean, theta_cov, trajs);
    write_trajectories(outdir + "/trajectories.csv", model, data, trajs);

    {
        CsvWriter w(outdir + "/scores.csv");
        w.header({"subject_id", "component", "score"});
        for (int i = 0; i < N; ++i)
            for (int m = 0; m < model.M(); ++m) {
                double acc = 0.0;
                for (const auto& Xi : samples.Xi) acc += Xi(i, m);
                w.field(data.subjects[i].id);
                w.field(static_cast<long>(m + 1));
                w.field(acc / D);
                w.end_row();
            }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/fitted.csv");
        w.header({"subject_id", "y", "fitted"});
        Eigen::VectorXd eta0_mean = samples.eta0.colwise().mean().transpose();
        Eigen::VectorXd eta1_mean = samples.eta1.colwise().mean().transpose();
        for (int i = 0; i < N; ++i) {
            w.field(data.subjects[i].id);
            w.field(data.subjects[i].y);
            w.field(model.U().row(i).dot(eta0_mean) + eta1_mean[i]);
            w.end_row();
        }
        w.commit();
    }
    {
        std::string log;
        log += "mode: mcmc\n";
        log += "iters: " + std::to_string(samples.iters) + "\n";
        log += "burnin: " + std::to_string(samples.burnin) + "\n";
        log += "thin: " + std::to_string(samples.thin) + "\n";
        log += "draws: " + std::to_string(D) + "\n";
        log += "accept_rate: " + format_double(samples.accept_rate) + "\n";
        log += "clamped: " + std::to_string(samples.clamped) + " of " + std::to_string(samples.clamp_total) + "\n";
        log += "seconds: " + format_double(samples.seconds) + "\n";
        write_text_atomic(outdir + "/runlog.txt", log);
    }
}

void export_vb_artifacts(const VbState& state, const SurfaceModel& model,
                         const SparseFunctionalDataset& data, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    const int N = model.n_subjects();
    const ReparamBasis& rb = model.reparam();

    Eigen::VectorXd theta_mean = rb.reconstruct_theta(state.mu_beta, state.mu_delta);
    Eigen::MatrixXd theta_cov = rb.T0 * state.Sigma_beta * rb.T0.transpose() +
                                rb.Tp * state.Sigma_delta * rb.Tp.transpose();
    Eigen::MatrixXd trajs(N, model.grid().t.size());
    for (int i = 0; i < N; ++i) trajs.row(i) = model.trajectory(state.sites[i].xi0).transpose();

    write_surface(outdir + "/surface.csv", model, theta_mean, theta_cov, trajs);
    write_trajectories(outdir + "/trajectories.csv", model, data, trajs);

    {
        CsvWriter w(outdir + "/scores.csv");
        w.header({"subject_id", "component", "score"});
        for (int i = 0; i < N; ++i)
            for (int m = 0; m < model.M(); ++m) {
                w.field(data.subjects[i].id);
                w.field(static_cast<long>(m + 1));
                w.field(state.sites[i].xi0[m]);
                w.end_row();
            }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/fitted.csv");
        w.header({"subject_id", "y", "fitted"});
        for (int i = 0; i < N; ++i) {
            w.field(data.subjects[i].id);
            w.field(data.subjects[i].y);
            w.field(model.U().row(i).dot(state.mu_eta0) + state.sites[i].Eb.dot(theta_mean));
            w.end_row();
        }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/bound.csv");
        w.header({"iteration", "bound"});
        for (std::size_t i = 0; i < state.bound_trace.size(); ++i) {
            w.field(static_cast<long>(i + 1));
            w.field(state.bound_trace[i]);
            w.end_row();
        }
        w.commit();
    }
    {
        std::string log;
        log += "mode: vb\n";
        log += "iterations: " + std::to_string(state.iterations) + "\n";
        log += "converged: " + std::string(state.converged ? "yes" : "no") + "\n";
        log += "bound_decreases: " + std::to_string(state.bound_decreases) + "\n";
        log += "worst_decrease: " + format_double(state.worst_decrease) + "\n";
        log += "clamped: " + std::to_string(state.clamped) + " of " + std::to_string(state.clamp_total) + "\n";
        log += "mu_lambda_x: " + format_double(state.mu_lambda_x) + "\n";
        log += "mu_lambda_t: " + format_double(state.mu_lambda_t) + "\n";
        log += "seconds: " + format_double(state.seconds) + "\n";
        write_text_atomic(outdir + "/runlog.txt", log);
    }
}

void export_metrics(const ScenarioReport& report, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    {
        CsvWriter w(outdir + "/metrics.csv");
        w.header({"replication", "method", "metric", "value"});
        for (const auto& r : report.rows) {
            if (r.metric == "seconds") continue;
            w.field(static_cast<long>(r.replication));
            w.field(r.method);
            w.field(r.metric);
            w.field(r.value);
            w.end_row();
        }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/timings.csv");
        w.header({"replication", "method", "seconds"});
        for (const auto& r : report.rows) {
            if (r.metric != "seconds") continue;
            w.field(static_cast<long>(r.replication));
            w.field(r.method);
            w.field(r.value);
            w.end_row();
        }
        w.commit();
    }
    {
        CsvWriter w(outdir + "/summary.csv");
        w.header({"method", "metric", "median"});
        std::vector<std::string> methods, metrics{"rmise_x", "rise_f", "rmse_y"};
        for (const auto& r : report.rows)
            if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        for (const auto& m : methods)
            for (const auto& met : metrics) {
                w.field(m);
                w.field(met);
                w.field(report.median(m, met));
                w.end_row();
            }
        w.commit();
    }
}

} // namespace fgam
