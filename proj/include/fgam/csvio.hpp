#pragma once

#include "fgam/dataset.hpp"
#include "fgam/fpca.hpp"
#include "fgam/mcmc.hpp"
#include "fgam/sim.hpp"
#include "fgam/vb.hpp"

#include <string>
#include <vector>

namespace fgam {

// Observation file: header `subject_id,t,value`.  Response file: header
// `subject_id,y[,u1,...]`.  Subjects that appear only in the observation file
// are kept with has_response = false (prediction targets).
SparseFunctionalDataset load_dataset(const std::string& obs_path, const std::string& resp_path);

// Atomic CSV writer: rows are flushed to `<path>.tmp` and renamed on commit.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    void header(const std::vector<std::string>& names);
    void field(const std::string& s);
    void field(double v);
    void field(long v);
    void end_row();
    void commit();

private:
    std::string path_, tmp_;
    std::string buf_;
    bool first_ = true;
    bool committed_ = false;
};

std::string format_double(double v); // shortest round-trip decimal form

void write_text_atomic(const std::string& path, const std::string& content);

// Artifact exporters shared by the CLI modes.
void export_fpca_artifacts(const FpcaResult& fpca, const SparseFunctionalDataset& data,
                           const std::string& outdir);
void export_mcmc_artifacts(const PosteriorSamples& samples, const SurfaceModel& model,
                           const SparseFunctionalDataset& data, const std::string& outdir);
void export_vb_artifacts(const VbState& state, const SurfaceModel& model,
                         const SparseFunctionalDataset& data, const std::string& outdir);
void export_metrics(const ScenarioReport& report, const std::string& outdir);

} // namespace fgam
