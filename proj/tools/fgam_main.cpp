#include "CLI11.hpp"

#include "fgam/csvio.hpp"
#include "fgam/errors.hpp"
#include "fgam/fpca.hpp"
#include "fgam/mcmc.hpp"
#include "fgam/sim.hpp"
#include "fgam/vb.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace fgam;

namespace {

struct CliOptions {
    std::string mode = "vb-mcmc";
    std::string obs, resp, out = "fgam_out";
    std::uint64_t seed = 1;
    int kx = 10, kt = 10, dx = 2, dt = 2;
    int grid_size = 50;
    double pve = 0.99;
    int max_pcs = -1;
    int iters = 10000, burnin = 1000, thin = 1;
    double al = 0.01, bl = 0.01, ax = 0.01, bx = 0.01, as = 0.01, bs = 0.01;
    double sigma_beta2 = 1e6, sigma_eta2 = 1e6;
    double vb_tol = 1e-6;
    int vb_max_iter = 200;
    int laguerre_points = 25;
    bool iters_set = false, burnin_set = false;
    // simulate-mode settings
    std::string surface = "f1";
    int sim_j = 10;
    double sim_sigma_x = 1.0;
    int sim_n = 100;
    int sim_reps = 5;
    std::string sim_methods = "mcmc,vb,vb-mcmc,truex,flm,pace";
};

McmcConfig mcmc_config(const CliOptions& o) {
    McmcConfig cfg;
    cfg.iters = o.iters;
    cfg.burnin = o.burnin;
    cfg.thin = o.thin;
    cfg.seed = o.seed;
    cfg.a_s = o.as;
    cfg.b_s = o.bs;
    cfg.a_x = o.ax;
    cfg.b_x = o.bx;
    cfg.a_l = o.al;
    cfg.b_l = o.bl;
    cfg.sigma_beta2 = o.sigma_beta2;
    cfg.sigma_eta2 = o.sigma_eta2;
    cfg.basis = {o.kx, o.kt, 3, o.dx, o.dt, 0.1};
    return cfg;
}

VbConfig vb_config(const CliOptions& o) {
    VbConfig cfg;
    cfg.tol = o.vb_tol;
    cfg.max_iters = o.vb_max_iter;
    cfg.laguerre_points = o.laguerre_points;
    cfg.a_s = o.as;
    cfg.b_s = o.bs;
    cfg.a_x = o.ax;
    cfg.b_x = o.bx;
    cfg.a_l = o.al;
    cfg.b_l = o.bl;
    cfg.sigma_beta2 = o.sigma_beta2;
    cfg.sigma_eta2 = o.sigma_eta2;
    cfg.basis = {o.kx, o.kt, 3, o.dx, o.dt, 0.1};
    return cfg;
}

FpcaOptions fpca_options(const CliOptions& o) {
    FpcaOptions f;
    f.grid_size = o.grid_size;
    f.pve = o.pve;
    f.max_pcs = o.max_pcs;
    return f;
}

SparseFunctionalDataset fitted_subset(const SparseFunctionalDataset& all) {
    SparseFunctionalDataset fit;
    fit.p0 = all.p0;
    for (const auto& s : all.subjects)
        if (s.has_response) fit.subjects.push_back(s);
    if (fit.subjects.empty()) throw DataError("no subject carries a response");
    return fit;
}

int dispatch(const CliOptions& o) {
    std::filesystem::create_directories(o.out);

    if (o.mode == "simulate") {
        Scenario sc;
        if (o.surface == "f1")
            sc.surface = SurfaceKind::F1;
        else if (o.surface == "f2")
            sc.surface = SurfaceKind::F2;
        else
            throw DataError("unknown surface '" + o.surface + "' (expected f1 or f2)");
        sc.J = o.sim_j;
        sc.sigma_x = o.sim_sigma_x;
        sc.N = o.sim_n;
        sc.seed = o.seed;
        sc.grid_size = o.grid_size;

        std::vector<Method> methods;
        std::stringstream ss(o.sim_methods);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok == "mcmc") methods.push_back(Method::Mcmc);
            else if (tok == "vb") methods.push_back(Method::Vb);
            else if (tok == "vb-mcmc") methods.push_back(Method::VbMcmc);
            else if (tok == "truex") methods.push_back(Method::TrueX);
            else if (tok == "flm") methods.push_back(Method::Flm);
            else if (tok == "pace") methods.push_back(Method::PaceTwoStep);
            else throw DataError("unknown method '" + tok + "'");
        }
        HarnessOptions hopts;
        hopts.mcmc = mcmc_config(o);
        hopts.vb = vb_config(o);
        hopts.fpca = fpca_options(o);
        hopts.fpca.max_pcs = (o.max_pcs > 0) ? o.max_pcs : 4;
        ScenarioReport report = run_scenario(sc, methods, o.sim_reps, hopts);
        export_metrics(report, o.out);
        std::cout << "wrote " << o.out << "/metrics.csv (" << report.rows.size() << " rows)\n";
        return 0;
    }

    if (o.obs.empty() || o.resp.empty()) throw DataError("data modes require --obs and --resp");
    SparseFunctionalDataset all = load_dataset(o.obs, o.resp);
    SparseFunctionalDataset train = fitted_subset(all);

    if (o.mode != "predict")
        for (const auto& s : all.subjects)
            if (!s.has_response)
                throw DataError("subject '" + s.id + "' lacks a response; only --mode predict accepts that");

    FpcaResult fpca = pace_init(train, fpca_options(o));
    export_fpca_artifacts(fpca, train, o.out);
    if (o.mode == "pace") return 0;

    if (o.mode == "mcmc") {
        McmcConfig cfg = mcmc_config(o);
        PosteriorSamples ps = run_mcmc(train, fpca, cfg);
        SurfaceModel model(train, fpca, cfg.basis);
        export_mcmc_artifacts(ps, model, train, o.out);
        return 0;
    }

    // vb, vb-mcmc, predict all start from a variational fit
    VbConfig vcfg = vb_config(o);
    VbState vstate = run_vb(train, fpca, vcfg);
    SurfaceModel model(train, fpca, vcfg.basis);
    export_vb_artifacts(vstate, model, train, o.mode == "vb" ? o.out : o.out + "/vb");
    if (o.mode == "vb") return 0;

    McmcConfig mcfg = mcmc_config(o);
    if (!o.iters_set) mcfg.iters = 1000; // warm-started chain default
    if (!o.burnin_set) mcfg.burnin = 500;
    McmcState warm = vb_to_mcmc_state(vstate);
    PosteriorSamples ps = run_mcmc(train, fpca, mcfg, &warm);
    export_mcmc_artifacts(ps, model, train, o.out);

    if (o.mode == "predict") {
        std::vector<Subject> targets;
        for (const auto& s : all.subjects)
            if (!s.has_response) targets.push_back(s);
        if (targets.empty()) throw DataError("predict mode: no subject without a response to predict");
        Prediction pred = predict_mcmc(ps, model, targets);
        CsvWriter w(o.out + "/predictions.csv");
        w.header({"subject_id", "mean", "lo95", "hi95"});
        for (std::size_t i = 0; i < targets.size(); ++i) {
            w.field(targets[i].id);
            w.field(pred.mean[i]);
            w.field(pred.lo[i]);
            w.field(pred.hi[i]);
            w.end_row();
        }
        w.commit();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian functional generalized additive regression for sparsely observed curves"};
    CliOptions o;

    app.add_option("--mode", o.mode, "pace | mcmc | vb | vb-mcmc | simulate | predict")
        ->check(CLI::IsMember({"pace", "mcmc", "vb", "vb-mcmc", "simulate", "predict"}));
    app.add_option("--obs", o.obs, "observation CSV (subject_id,t,value)");
    app.add_option("--resp", o.resp, "response CSV (subject_id,y[,u1,...])");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--seed", o.seed, "RNG seed");
    app.add_option("--kx", o.kx, "x-axis basis size");
    app.add_option("--kt", o.kt, "t-axis basis size");
    app.add_option("--dx", o.dx, "x-axis difference order");
    app.add_option("--dt", o.dt, "t-axis difference order");
    app.add_option("--grid-size", o.grid_size, "working grid size");
    app.add_option("--pve", o.pve, "variance fraction for component selection");
    app.add_option("--max-pcs", o.max_pcs, "cap on retained components (-1: none)");
    auto* it_opt = app.add_option("--iters", o.iters, "MCMC iterations");
    auto* bi_opt = app.add_option("--burnin", o.burnin, "MCMC burn-in");
    app.add_option("--thin", o.thin, "MCMC thinning");
    app.add_option("--al", o.al, "smoothing Gamma shape");
    app.add_option("--bl", o.bl, "smoothing Gamma rate");
    app.add_option("--ax", o.ax, "measurement IG shape");
    app.add_option("--bx", o.bx, "measurement IG rate");
    app.add_option("--as", o.as, "response IG shape");
    app.add_option("--bs", o.bs, "response IG rate");
    app.add_option("--sigma-beta2", o.sigma_beta2, "nullspace coefficient prior variance");
    app.add_option("--sigma-eta2", o.sigma_eta2, "offset coefficient prior variance");
    app.add_option("--vb-tol", o.vb_tol, "VB relative bound tolerance");
    app.add_option("--vb-max-iter", o.vb_max_iter, "VB iteration cap");
    app.add_option("--laguerre-points", o.laguerre_points, "quadrature nodes for the smoothing updates");
    app.add_option("--surface", o.surface, "simulate: true surface (f1 | f2)");
    app.add_option("--j", o.sim_j, "simulate: observations per subject");
    app.add_option("--sigma-x", o.sim_sigma_x, "simulate: measurement error SD");
    app.add_option("--n-subjects", o.sim_n, "simulate: subjects per replication");
    app.add_option("--reps", o.sim_reps, "simulate: replications");
    app.add_option("--methods", o.sim_methods, "simulate: comma list of fitters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    o.iters_set = it_opt->count() > 0;
    o.burnin_set = bi_opt->count() > 0;

    try {
        return dispatch(o);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
