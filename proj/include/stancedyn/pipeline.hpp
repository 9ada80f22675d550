#pragma once

#include <map>
#include <string>
#include <vector>

#include "stancedyn/config.hpp"
#include "stancedyn/density.hpp"
#include "stancedyn/landscape.hpp"
#include "stancedyn/svg.hpp"

namespace stancedyn {

struct StageRecord {
    std::string name;
    std::map<std::string, std::string> inputs; // path -> sha256
    std::string config_hash;
    std::map<std::string, std::string> outputs; // path -> sha256
    bool skipped = false; // this run reused the previous artifacts
};

/// Stage ledger persisted as manifest.json in the output directory.
/// Wall-clock durations go to timings.json instead, so reruns with equal
/// inputs produce byte-identical manifests.
struct Manifest {
    std::vector<StageRecord> stages;

    const StageRecord* find(const std::string& name) const;
    static Manifest load(const std::string& path);
    void save(const std::string& path) const;
};

/// Holds the output-directory lock for the lifetime of a pipeline run.
class OutputLock {
public:
    explicit OutputLock(const std::string& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::string path_;
};

/// Run ingest -> regress -> latent -> stationarity -> train -> evaluate ->
/// analytics, writing every artifact plus the manifest. Stages whose
/// inputs, config hash, and outputs all match the previous manifest are
/// skipped. Returns the manifest.
Manifest run_pipeline(const PipelineConfig& config);

struct Snapshot {
    int year = 0;
    double t_norm = 0.0;
    DriftField field; // 2-D (marginalized when the latent space is larger)
    DensityGrid density;
};

/// One field per year at the year's normalized midpoint plus the KDE of
/// the trajectory points that fall inside the year. Latent spaces with
/// more than two dimensions are reduced to the first two by
/// Boltzmann-weighted marginalization (potential and drift alike).
std::vector<Snapshot> snapshot_series(const PotentialNet& net, const std::vector<int>& years,
                                      const LatticeSpec& grid2d,
                                      const std::vector<LatentTrajectory>& trajs, double kt,
                                      int marg_nodes = 21);

/// Export snapshots as layered SVGs plus drift-field CSVs; returns the
/// file names written.
std::vector<std::string> export_snapshots(const std::string& out_dir,
                                          const std::vector<Snapshot>& snapshots,
                                          const SvgStyle& style = {});

} // namespace stancedyn
