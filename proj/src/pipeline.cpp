#include "normdiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "normdiff/calibration.hpp"
#include "normdiff/dependence.hpp"
#include "normdiff/ks.hpp"
#include "normdiff/memorisation.hpp"

namespace normdiff::pipe {

using nlohmann::json;
namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (backbone != "mlp" && backbone != "saint")
    throw std::invalid_argument("backbone must be 'mlp' or 'saint'");
  if (split_fraction <= 0.0 || split_fraction >= 1.0)
    throw std::invalid_argument("split_fraction must be in (0,1)");
  if (samples_per_cell == 0)
    throw std::invalid_argument("samples_per_cell must be positive");
  if (T < 1) throw std::invalid_argument("schedule length must be >= 1");
  mlp.validate();
  saint.validate();
  synth.validate();
}

RunConfig run_config_from_json_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config: " + path);
  json j;
  in >> j;
  RunConfig c = std::move(base);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dataset_csv", c.dataset_csv);
  get("backbone", c.backbone);
  get("T", c.T);
  get("beta_start", c.beta_start);
  get("beta_end", c.beta_end);
  get("split_fraction", c.split_fraction);
  get("samples_per_cell", c.samples_per_cell);
  get("seed", c.seed);
  get("out_dir", c.out_dir);
  get("eval_calibration", c.eval_calibration);
  get("eval_ks", c.eval_ks);
  get("eval_dependence", c.eval_dependence);
  get("eval_memorisation", c.eval_memorisation);
  get("ks_permutations", c.ks_permutations);
  get("mantel_permutations", c.mantel_permutations);
  get("dependence_cap", c.dependence_cap);
  get("dependence_age_min", c.dependence_age_min);
  get("dependence_age_max", c.dependence_age_max);
  get("ranked_pairs_k", c.ranked_pairs_k);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    auto gs = [&](const char* key, auto& field) {
      if (s.contains(key)) field = s.at(key).get<std::decay_t<decltype(field)>>();
    };
    gs("n_samples", c.synth.n_samples);
    gs("age_min", c.synth.age_min);
    gs("age_max", c.synth.age_max);
    gs("seed", c.synth.seed);
  }
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    if (m.contains("hidden_widths"))
      c.mlp.hidden_widths = m.at("hidden_widths").get<std::vector<std::size_t>>();
    if (m.contains("dropout_rate"))
      c.mlp.dropout_rate = m.at("dropout_rate").get<double>();
    if (m.contains("use_batchnorm"))
      c.mlp.use_batchnorm = m.at("use_batchnorm").get<bool>();
    if (m.contains("covariate_mlp_widths"))
      c.mlp.covariate_mlp_widths =
          m.at("covariate_mlp_widths").get<std::vector<std::size_t>>();
  }
  if (j.contains("saint")) {
    const auto& s = j.at("saint");
    auto gs = [&](const char* key, auto& field) {
      if (s.contains(key)) field = s.at(key).get<std::decay_t<decltype(field)>>();
    };
    gs("d_model", c.saint.d_model);
    gs("n_heads", c.saint.n_heads);
    gs("depth", c.saint.depth);
    gs("ff_width", c.saint.ff_width);
    gs("dropout_rate", c.saint.dropout_rate);
    gs("intersample_prob", c.saint.intersample_prob);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    auto go = [&](const char* key, auto& field) {
      if (o.contains(key)) field = o.at(key).get<std::decay_t<decltype(field)>>();
    };
    go("lr", c.optim.lr);
    go("lr_decay", c.optim.lr_decay);
    go("weight_decay", c.optim.weight_decay);
    go("grad_clip", c.optim.grad_clip);
    go("batch_size", c.optim.batch_size);
    go("epochs", c.optim.epochs);
    go("seed", c.optim.seed);
  }
  return c;
}

namespace {

// Covariate z-scaling for network inputs; raw age is far outside the unit
// scale the weights are initialised for.
void fit_cov_scaler(const data::Cohort& train, std::vector<double>* means,
                    std::vector<double>* sds) {
  const std::size_t c = train.cov_dim();
  means->assign(c, 0.0);
  sds->assign(c, 1.0);
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < train.n; ++i) s += train.covariates[i * c + k];
    (*means)[k] = s / static_cast<double>(train.n);
    double ss = 0.0;
    for (std::size_t i = 0; i < train.n; ++i) {
      const double d = train.covariates[i * c + k] - (*means)[k];
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(train.n - 1));
    (*sds)[k] = sd > 0.0 ? sd : 1.0;
  }
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::ofstream out(dir + "/" + name);
  if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
  return out;
}

}  // namespace

Checkpoint train_model(const data::Cohort& train, const RunConfig& config) {
  config.validate();
  if (train.n < 2) throw std::invalid_argument("train_model: cohort too small");

  Checkpoint ckpt;
  ckpt.backbone = config.backbone;
  ckpt.data_dim = train.idp_dim();
  ckpt.cov_dim = train.cov_dim();
  ckpt.T = config.T;
  ckpt.beta_start = config.beta_start;
  ckpt.beta_end = config.beta_end;
  ckpt.mlp = config.mlp;
  ckpt.saint = config.saint;
  ckpt.optim = config.optim;
  ckpt.idp_names = train.idp_names;
  ckpt.seed = config.seed;

  data::Cohort scaled = train;
  ckpt.idp_scaler = data::fit_apply_zscale(scaled);
  fit_cov_scaler(scaled, &ckpt.cov_means, &ckpt.cov_sds);

  Tensor y0({scaled.n, scaled.idp_dim()}, scaled.idps);
  std::vector<double> cov = scaled.covariates;
  for (std::size_t i = 0; i < scaled.n; ++i)
    for (std::size_t k = 0; k < scaled.cov_dim(); ++k) {
      auto& v = cov[i * scaled.cov_dim() + k];
      v = (v - ckpt.cov_means[k]) / ckpt.cov_sds[k];
    }
  Tensor c({scaled.n, scaled.cov_dim()}, std::move(cov));

  auto net = make_denoiser(ckpt, /*load_params=*/false);
  const auto schedule = ckpt.schedule();
  const auto result = diff::train(*net, y0, c, schedule, config.optim);
  ckpt.params = net->flat_parameters();
  ckpt.epoch_loss = result.epoch_loss;
  ckpt.train_seconds = result.seconds;
  return ckpt;
}

void sample_grid(const Checkpoint& ckpt, const data::CovariateGrid& grid,
                 std::size_t samples_per_cell, std::uint64_t seed,
                 const std::string& base_path) {
  auto net = make_denoiser(ckpt);
  const auto schedule = ckpt.schedule();
  SampleStoreWriter writer(base_path);
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const auto& cell = grid.cells[i];
    const auto cov = ckpt.normalize_covariates(cell.age_center, cell.sex);
    const Tensor block = diff::ancestral_sample(*net, cov, samples_per_cell,
                                                schedule, Rng::derive_seed(seed, i));
    writer.append(cell.age_center, cell.sex, block.values(), samples_per_cell,
                  ckpt.data_dim);
  }
  writer.finalize(seed);
}

double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  return d;
}

namespace {

struct BinnedHoldout {
  // per store cell: holdout row indices
  std::vector<std::vector<std::size_t>> rows;
  std::size_t skipped = 0;
  std::vector<long> row_cell;  // -1 when outside the grid
};

BinnedHoldout bin_holdout(const SampleStore& store, const data::Cohort& holdout) {
  BinnedHoldout b;
  b.rows.resize(store.cells().size());
  b.row_cell.assign(holdout.n, -1);
  for (std::size_t i = 0; i < holdout.n; ++i) {
    const double center = std::floor(holdout.age(i) + 0.5);
    long cell = -1;
    for (std::size_t k = 0; k < store.cells().size(); ++k) {
      if (store.cells()[k].sex == holdout.sex(i) &&
          std::abs(store.cells()[k].age - center) < 1e-9) {
        cell = static_cast<long>(k);
        break;
      }
    }
    if (cell < 0) {
      ++b.skipped;
      continue;
    }
    b.rows[static_cast<std::size_t>(cell)].push_back(i);
    b.row_cell[i] = cell;
  }
  return b;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

EvalReport evaluate(const Checkpoint& ckpt, const SampleStore& store,
                    const data::Cohort& holdout, const data::Cohort& train,
                    const RunConfig& config, const std::string& out_dir) {
  EvalReport rep;
  const std::size_t d = ckpt.data_dim;
  const bool emit = !out_dir.empty();
  if (emit) fs::create_directories(out_dir);

  data::Cohort hold_scaled = holdout;
  ckpt.idp_scaler.transform(hold_scaled);
  const BinnedHoldout binned = bin_holdout(store, hold_scaled);
  rep.skipped_rows = binned.skipped;

  // per (cell, idp) value vectors, loaded once
  const std::size_t n_cells = store.cells().size();
  std::vector<std::vector<std::vector<double>>> gen(n_cells);
  std::vector<std::vector<std::vector<double>>> real(n_cells);
  for (std::size_t cidx = 0; cidx < n_cells; ++cidx) {
    gen[cidx].resize(d);
    real[cidx].assign(d, {});
    const auto block = store.read_cell(cidx);
    const std::size_t m = store.cells()[cidx].m;
    for (std::size_t k = 0; k < d; ++k) {
      gen[cidx][k].resize(m);
      for (std::size_t i = 0; i < m; ++i) gen[cidx][k][i] = block[i * d + k];
    }
    for (std::size_t row : binned.rows[cidx])
      for (std::size_t k = 0; k < d; ++k)
        real[cidx][k].push_back(hold_scaled.idps[row * d + k]);
  }

  if (config.eval_calibration) {
    std::ofstream ace_csv, cov_csv, pit_csv, cent_csv;
    if (emit) {
      ace_csv = open_out(out_dir, "ace.csv");
      ace_csv << "idp,q,ace,n_bins\n";
      cov_csv = open_out(out_dir, "coverage_delta.csv");
      cov_csv << "idp,a,bin,age,sex,delta\n";
      pit_csv = open_out(out_dir, "pit_hist.csv");
      pit_csv << "idp,bin_lo,bin_hi,mass\n";
      cent_csv = open_out(out_dir, "centiles.csv");
      cent_csv << "idp,age,sex,q,centile_scaled,centile_native\n";
    }
    for (std::size_t k = 0; k < d; ++k) {
      std::vector<std::vector<double>> model_bins, hold_bins;
      for (std::size_t cidx = 0; cidx < n_cells; ++cidx) {
        model_bins.push_back(gen[cidx][k]);
        hold_bins.push_back(real[cidx][k]);
      }
      for (double q : kAceQuantiles) {
        const auto res = evalcal::ace(model_bins, hold_bins, q);
        double& acc = rep.mean_ace[q];
        acc += res.ace / static_cast<double>(d);
        if (emit)
          ace_csv << ckpt.idp_names[k] << ',' << q << ',' << res.ace << ','
                  << res.per_bin.size() << '\n';
      }
      const auto u = evalcal::pit(model_bins, hold_bins);
      rep.pit_ks_per_idp.push_back(u.empty() ? 1.0 : ks_uniform(u));
      if (emit) {
        const auto hist = evalcal::pit_histogram(u);
        for (std::size_t b = 0; b < hist.size(); ++b)
          pit_csv << ckpt.idp_names[k] << ','
                  << static_cast<double>(b) / static_cast<double>(hist.size()) << ','
                  << static_cast<double>(b + 1) / static_cast<double>(hist.size())
                  << ',' << hist[b] << '\n';
        for (std::size_t cidx = 0; cidx < n_cells; ++cidx)
          for (double q : kAceQuantiles) {
            const double cs = evalcal::centile(gen[cidx][k], q);
            cent_csv << ckpt.idp_names[k] << ',' << store.cells()[cidx].age << ','
                     << store.cells()[cidx].sex << ',' << q << ',' << cs << ','
                     << ckpt.idp_scaler.unscale_value(k, cs) << '\n';
          }
      }
    }
    // coverage deltas pooled across idps and bins per nominal level
    for (double a : kCoverageLevels) {
      std::vector<double> deltas;
      for (std::size_t k = 0; k < d; ++k) {
        std::vector<std::vector<double>> model_bins, hold_bins;
        for (std::size_t cidx = 0; cidx < n_cells; ++cidx) {
          model_bins.push_back(gen[cidx][k]);
          hold_bins.push_back(real[cidx][k]);
        }
        const auto res = evalcal::coverage_delta(model_bins, hold_bins, a);
        for (std::size_t b = 0; b < res.per_bin_delta.size(); ++b) {
          deltas.push_back(res.per_bin_delta[b]);
          if (emit) {
            const auto& cell = store.cells()[res.eligible_bins[b]];
            cov_csv << ckpt.idp_names[k] << ',' << a << ',' << res.eligible_bins[b]
                    << ',' << cell.age << ',' << cell.sex << ','
                    << res.per_bin_delta[b] << '\n';
          }
        }
      }
      rep.median_coverage_delta[a] = median_of(deltas);
    }
  }

  if (config.eval_ks) {
    std::vector<evalks::KsResult> results;
    std::ofstream ks_csv;
    if (emit) {
      ks_csv = open_out(out_dir, "ks_results.csv");
      ks_csv << "idp,age,sex,d_stat,p_value,n_real,n_gen\n";
    }
    std::size_t stream = 0;
    for (std::size_t cidx = 0; cidx < n_cells; ++cidx) {
      for (std::size_t k = 0; k < d; ++k) {
        ++stream;
        if (real[cidx][k].size() < evalcal::kMinBinCount) continue;
        evalks::KsResult r;
        r.bin = cidx;
        r.idp = k;
        r.n_real = real[cidx][k].size();
        r.n_gen = gen[cidx][k].size();
        r.d_stat = evalks::ks_statistic(real[cidx][k], gen[cidx][k]);
        r.p_value = evalks::permutation_pvalue(
            real[cidx][k], gen[cidx][k], config.ks_permutations,
            Rng::derive_seed(config.seed ^ 0x6b73ULL, stream));
        results.push_back(r);
        if (emit)
          ks_csv << ckpt.idp_names[k] << ',' << store.cells()[cidx].age << ','
                 << store.cells()[cidx].sex << ',' << r.d_stat << ',' << r.p_value
                 << ',' << r.n_real << ',' << r.n_gen << '\n';
      }
    }
    rep.ks_rejection_fraction = evalks::rejection_fraction(results);
  }

  if (config.eval_dependence && d >= 2) {
    // pooled band: real rows within [age_min, age_max], paired generated
    // rows drawn from each row's covariate cell
    std::vector<std::size_t> band_rows;
    for (std::size_t i = 0; i < hold_scaled.n; ++i)
      if (binned.row_cell[i] >= 0 && hold_scaled.age(i) >= config.dependence_age_min &&
          hold_scaled.age(i) <= config.dependence_age_max)
        band_rows.push_back(i);
    Rng rng(Rng::derive_seed(config.seed ^ 0xdef0ULL, 0));
    if (band_rows.size() > config.dependence_cap) {
      rng.shuffle(band_rows);
      band_rows.resize(config.dependence_cap);
      std::sort(band_rows.begin(), band_rows.end());
    }
    if (band_rows.size() >= 4) {
      evaldep::Matrix real_m, gen_m;
      real_m.rows = gen_m.rows = band_rows.size();
      real_m.cols = gen_m.cols = d;
      real_m.v.reserve(band_rows.size() * d);
      gen_m.v.reserve(band_rows.size() * d);
      std::vector<std::size_t> cursor(n_cells, 0);
      for (std::size_t row : band_rows) {
        const auto cidx = static_cast<std::size_t>(binned.row_cell[row]);
        const std::size_t m = store.cells()[cidx].m;
        const std::size_t pick = cursor[cidx]++ % m;
        for (std::size_t k = 0; k < d; ++k) {
          real_m.v.push_back(hold_scaled.idps[row * d + k]);
          gen_m.v.push_back(gen[cidx][k][pick]);
        }
      }

      const auto shape_real = evaldep::shape_matrix(real_m);
      const auto shape_gen = evaldep::shape_matrix(gen_m);
      const auto mantel_res = evaldep::mantel(
          shape_real.corr, shape_gen.corr, shape_real.size(),
          config.mantel_permutations, Rng::derive_seed(config.seed ^ 0x4d4eULL, 0));
      rep.mantel_r = mantel_res.r;
      rep.mantel_p = mantel_res.p_value;

      std::vector<evaldep::PairDistanceRecord> records;
      std::vector<double> e2_gen_real, e2_prod_real;
      std::size_t pair_stream = 0;
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
          ++pair_stream;
          evaldep::Matrix r2, g2;
          r2.rows = g2.rows = band_rows.size();
          r2.cols = g2.cols = 2;
          r2.v.resize(2 * band_rows.size());
          g2.v.resize(2 * band_rows.size());
          for (std::size_t t = 0; t < band_rows.size(); ++t) {
            r2.v[2 * t] = real_m.at(t, i);
            r2.v[2 * t + 1] = real_m.at(t, j);
            g2.v[2 * t] = gen_m.at(t, i);
            g2.v[2 * t + 1] = gen_m.at(t, j);
          }
          const auto prod = evaldep::product_of_marginals(
              g2, Rng::derive_seed(config.seed ^ 0x704dULL, pair_stream));
          evaldep::PairDistanceRecord rec;
          rec.i = i;
          rec.j = j;
          rec.e2_gen_vs_real = evaldep::energy_distance(g2, r2);
          rec.e2_prod_vs_gen = evaldep::energy_distance(prod, g2);
          rec.mmd2_gen_vs_real = evaldep::mmd2_rbf(g2, r2);
          rec.mmd2_prod_vs_gen = evaldep::mmd2_rbf(prod, g2);
          records.push_back(rec);
          e2_gen_real.push_back(rec.e2_gen_vs_real);
          e2_prod_real.push_back(evaldep::energy_distance(prod, r2));
        }
      }
      rep.median_e2_gen_real = median_of(e2_gen_real);
      rep.median_e2_prod_real = median_of(e2_prod_real);

      if (emit) {
        auto pd = open_out(out_dir, "pair_distances.csv");
        pd << "i,j,e2_prod_vs_gen,e2_gen_vs_real,mmd2_prod_vs_gen,mmd2_gen_vs_real\n";
        for (const auto& r : records)
          pd << r.i << ',' << r.j << ',' << r.e2_prod_vs_gen << ','
             << r.e2_gen_vs_real << ',' << r.mmd2_prod_vs_gen << ','
             << r.mmd2_gen_vs_real << '\n';

        auto write_matrix = [&](const std::string& name, const std::vector<double>& m,
                                std::size_t p) {
          auto out = open_out(out_dir, name);
          const auto& order = shape_real.leaf_order;  // shared ordering
          for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = 0; b < p; ++b)
              out << (b ? "," : "") << m[order[a] * p + order[b]];
            out << '\n';
          }
        };
        const std::size_t p = shape_real.size();
        write_matrix("cshape_real.csv", shape_real.corr, p);
        write_matrix("cshape_gen.csv", shape_gen.corr, p);
        std::vector<double> absdiff(p * p);
        for (std::size_t t = 0; t < p * p; ++t)
          absdiff[t] = std::abs(shape_real.corr[t] - shape_gen.corr[t]);
        write_matrix("cshape_absdiff.csv", absdiff, p);

        json mj;
        mj["r"] = rep.mantel_r;
        mj["p_value"] = rep.mantel_p;
        mj["n_perm"] = config.mantel_permutations;
        mj["pairs"] = p;
        open_out(out_dir, "mantel.json") << mj.dump();

        if (records.size() >= 3 * config.ranked_pairs_k) {
          const auto ranked = evaldep::ranked_pair_report(
              records, config.ranked_pairs_k, gen_m, real_m,
              Rng::derive_seed(config.seed ^ 0x704dULL, 0));
          fs::create_directories(out_dir + "/pairs");
          auto dump_band = [&](const char* band,
                               const std::vector<evaldep::RankedPair>& rps) {
            for (const auto& rp : rps) {
              auto out = open_out(out_dir + "/pairs",
                                  std::string(band) + "_" +
                                      std::to_string(rp.record.i) + "_" +
                                      std::to_string(rp.record.j) + ".csv");
              out << "panel,row,col,value\n";
              const std::size_t b = evaldep::kShapeGridBins;
              auto grid = [&](const char* panel, const std::vector<double>& h) {
                for (std::size_t r = 0; r < b; ++r)
                  for (std::size_t cc = 0; cc < b; ++cc)
                    out << panel << ',' << r << ',' << cc << ',' << h[r * b + cc]
                        << '\n';
              };
              grid("prod", rp.prod_hist);
              grid("gen", rp.gen_hist);
              grid("prod_gen_diff", rp.prod_gen_diff);
              grid("real", rp.real_hist);
              grid("gen_real_diff", rp.gen_real_diff);
            }
          };
          dump_band("top", ranked.top);
          dump_band("middle", ranked.middle);
          dump_band("bottom", ranked.bottom);
        }
      }
    }
  }

  if (config.eval_memorisation) {
    data::Cohort train_scaled = train;
    ckpt.idp_scaler.transform(train_scaled);
    auto strata_of = [](const data::Cohort& c) {
      std::vector<std::pair<long, int>> s(c.n);
      for (std::size_t i = 0; i < c.n; ++i)
        s[i] = {static_cast<long>(std::floor(c.age(i) + 0.5)), c.sex(i)};
      return s;
    };
    const auto balanced = evalmem::balance_by_strata(
        strata_of(train_scaled), strata_of(hold_scaled),
        Rng::derive_seed(config.seed ^ 0x6d656dULL, 0));

    auto gather = [&](const data::Cohort& c, const std::vector<std::size_t>& rows) {
      std::vector<double> out;
      out.reserve(rows.size() * d);
      for (std::size_t r : rows)
        out.insert(out.end(), c.idps.begin() + static_cast<std::ptrdiff_t>(r * d),
                   c.idps.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
      return out;
    };
    const auto train_pts = gather(train_scaled, balanced.train_rows);
    const auto hold_pts = gather(hold_scaled, balanced.holdout_rows);

    // generated queries at the balanced holdout subjects' covariates
    std::vector<double> queries;
    std::vector<std::size_t> query_rows;
    std::vector<std::size_t> cursor(n_cells, 0);
    for (std::size_t row : balanced.holdout_rows) {
      const long cell = binned.row_cell[row];
      if (cell < 0) continue;
      const auto cidx = static_cast<std::size_t>(cell);
      const std::size_t pick = cursor[cidx]++ % store.cells()[cidx].m;
      for (std::size_t k = 0; k < d; ++k) queries.push_back(gen[cidx][k][pick]);
      query_rows.push_back(row);
    }
    if (!query_rows.empty() && !balanced.train_rows.empty() &&
        !balanced.holdout_rows.empty()) {
      const auto nn = evalmem::nn_ratio(queries, query_rows.size(), train_pts,
                                        balanced.train_rows.size(), hold_pts,
                                        balanced.holdout_rows.size(), d);
      rep.prob_lt_1 = nn.prob_lt_1;
      if (emit) {
        auto rcsv = open_out(out_dir, "nn_ratios.csv");
        rcsv << "query,ratio\n";
        for (std::size_t i = 0; i < nn.ratios.size(); ++i)
          rcsv << i << ',' << nn.ratios[i] << '\n';
        json nj;
        nj["prob_lt_1"] = nn.prob_lt_1;
        nj["n_train"] = nn.n_train;
        nj["n_holdout"] = nn.n_holdout;
        nj["n_queries"] = nn.ratios.size();
        nj["dropped_strata"] = balanced.dropped_strata;
        nj["seed"] = config.seed;
        open_out(out_dir, "nn_summary.json") << nj.dump();
      }
    }
  }

  if (emit) {
    json r;
    r["schema_version"] = 1;
    for (const auto& [q, v] : rep.mean_ace) r["mean_ace"][std::to_string(q)] = v;
    for (const auto& [a, v] : rep.median_coverage_delta)
      r["median_coverage_delta"][std::to_string(a)] = v;
    r["pit_ks_per_idp"] = rep.pit_ks_per_idp;
    r["ks_rejection_fraction"] = rep.ks_rejection_fraction;
    r["mantel_r"] = rep.mantel_r;
    r["mantel_p"] = rep.mantel_p;
    r["median_e2_gen_real"] = rep.median_e2_gen_real;
    r["median_e2_prod_real"] = rep.median_e2_prod_real;
    r["prob_lt_1"] = rep.prob_lt_1;
    r["skipped_rows"] = rep.skipped_rows;
    open_out(out_dir, "report.json") << r.dump(2);
  }
  return rep;
}

}  // namespace normdiff::pipe
