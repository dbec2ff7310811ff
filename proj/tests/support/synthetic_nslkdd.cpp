#include "support/synthetic_nslkdd.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

namespace testsupport {

namespace {

using Rng = std::mt19937_64;

struct Row {
    std::array<std::string, 41> f;
    std::string label;

    Row() { f.fill("0"); }

    void set_int(int col, long v) { f[size_t(col)] = std::to_string(v); }
    void set_rate(int col, double v) {
        v = std::clamp(v, 0.0, 1.0);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        f[size_t(col)] = buf;
    }
    void set_str(int col, const std::string& v) { f[size_t(col)] = v; }

    std::string csv(int difficulty) const {
        std::string out;
        for (const auto& field : f) {
            out += field;
            out += ',';
        }
        out += label;
        if (difficulty >= 0) {
            out += ',';
            out += std::to_string(difficulty);
        }
        out += '\n';
        return out;
    }
};

// column indices, matching the standard 41-feature layout
enum {
    kDuration = 0,
    kProtocol = 1,
    kService = 2,
    kFlag = 3,
    kSrcBytes = 4,
    kDstBytes = 5,
    kHot = 9,
    kLoggedIn = 11,
    kNumFileCreations = 16,
    kNumAccessFiles = 18,
    kIsGuestLogin = 21,
    kCount = 22,
    kSrvCount = 23,
    kSerror = 24,
    kSrvSerror = 25,
    kRerror = 26,
    kSrvRerror = 27,
    kSameSrv = 28,
    kDiffSrv = 29,
    kSrvDiffHost = 30,
    kDstHostCount = 31,
    kDstHostSrvCount = 32,
    kDstHostSameSrv = 33,
    kDstHostDiffSrv = 34,
    kDstHostSameSrcPort = 35,
    kDstHostSrvDiffHost = 36,
    kDstHostSerror = 37,
    kDstHostSrvSerror = 38,
    kDstHostRerror = 39,
    kDstHostSrvRerror = 40,
};

double uni(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
long unii(Rng& rng, long lo, long hi) {
    return std::uniform_int_distribution<long>(lo, hi)(rng);
}
bool bern(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }
long pois(Rng& rng, double mean) { return std::poisson_distribution<long>(mean)(rng); }

Row normal_record(Rng& rng, double level = 1.0, const std::string& service_override = "") {
    Row r;
    r.label = "normal";

    const int svc = std::discrete_distribution<int>({50, 20, 15, 15})(rng);
    static const char* services[] = {"http", "smtp", "ftp_data", "domain_u"};
    static const char* protocols[] = {"tcp", "tcp", "tcp", "udp"};
    r.set_str(kService, service_override.empty() ? services[svc] : service_override);
    r.set_str(kProtocol, protocols[svc]);
    r.set_str(kFlag, bern(rng, 0.97) ? "SF" : (bern(rng, 0.5) ? "REJ" : "RSTO"));

    const double load = level * std::exp(std::normal_distribution<double>(0.0, 0.5)(rng));

    static const double dur_mean[] = {2.0, 4.0, 8.0, 0.0};
    static const double src_mu[] = {5.5, 6.5, 7.0, 3.8};
    static const double src_sd[] = {0.7, 0.5, 1.2, 0.1};
    static const double dst_mu[] = {8.0, 5.0, 0.0, 4.6};

    if (dur_mean[svc] > 0)
        r.set_int(kDuration, lround(std::exponential_distribution<double>(1.0 / dur_mean[svc])(rng)));
    r.set_int(kSrcBytes,
              lround(std::exp(std::normal_distribution<double>(src_mu[svc], src_sd[svc])(rng)) * load));
    if (dst_mu[svc] > 0)
        r.set_int(kDstBytes,
                  lround(std::exp(std::normal_distribution<double>(dst_mu[svc], 0.8)(rng)) * load));

    if (bern(rng, 0.02)) r.set_int(kHot, 1);
    r.set_int(kLoggedIn, svc != 3 && bern(rng, 0.95) ? 1 : 0);
    if (bern(rng, 0.01)) r.set_int(kNumFileCreations, 1);
    if (bern(rng, 0.01)) r.set_int(kNumAccessFiles, 1);
    if (bern(rng, 0.03)) r.set_int(kIsGuestLogin, 1);

    const long count = std::min<long>(511, 1 + pois(rng, 6.0 * load));
    r.set_int(kCount, count);
    r.set_int(kSrvCount, std::max<long>(1, lround(count * uni(rng, 0.8, 1.0))));

    if (bern(rng, 0.03)) {
        const double e = uni(rng, 0.01, 0.2);
        r.set_rate(kSerror, e);
        r.set_rate(kSrvSerror, e * uni(rng, 0.5, 1.0));
    }
    if (bern(rng, 0.04)) {
        const double e = uni(rng, 0.01, 0.3);
        r.set_rate(kRerror, e);
        r.set_rate(kSrvRerror, e * uni(rng, 0.5, 1.0));
    }

    const double same_srv = uni(rng, 0.85, 1.0);
    r.set_rate(kSameSrv, same_srv);
    r.set_rate(kDiffSrv, (1.0 - same_srv) * uni(rng, 0.0, 1.0));
    r.set_rate(kSrvDiffHost, uni(rng, 0.0, 0.2));

    r.set_int(kDstHostCount, std::min<long>(255, 60 + pois(rng, 120.0)));
    r.set_int(kDstHostSrvCount,
              std::min<long>(255, svc == 0 ? pois(rng, 180.0) : pois(rng, 40.0)));
    r.set_rate(kDstHostSameSrv, svc == 0 ? uni(rng, 0.7, 1.0) : uni(rng, 0.3, 0.9));
    r.set_rate(kDstHostDiffSrv, uni(rng, 0.0, 0.08));
    r.set_rate(kDstHostSameSrcPort, svc == 3 ? uni(rng, 0.5, 1.0) : uni(rng, 0.0, 0.15));
    r.set_rate(kDstHostSrvDiffHost, uni(rng, 0.0, 0.1));
    if (bern(rng, 0.03)) r.set_rate(kDstHostSerror, uni(rng, 0.01, 0.15));
    if (bern(rng, 0.03)) r.set_rate(kDstHostRerror, uni(rng, 0.01, 0.2));
    return r;
}

// SYN flood: half-open connections to one host, sweeping source ports.
Row neptune_record(Rng& rng) {
    Row r;
    r.label = "neptune";
    r.set_str(kProtocol, "tcp");
    static const char* services[] = {"private", "private", "private", "telnet", "finger", "http"};
    r.set_str(kService, services[unii(rng, 0, 5)]);
    const double u = uni(rng, 0.0, 1.0);
    r.set_str(kFlag, u < 0.8 ? "S0" : (u < 0.95 ? "REJ" : "RSTO"));

    r.set_int(kCount, unii(rng, 80, 511));
    r.set_int(kSrvCount, unii(rng, 1, 20));
    const double serror = uni(rng, 0.7, 1.0);
    r.set_rate(kSerror, serror);
    r.set_rate(kSrvSerror, serror * uni(rng, 0.85, 1.0));
    r.set_rate(kSameSrv, uni(rng, 0.0, 0.15));
    r.set_rate(kDiffSrv, uni(rng, 0.03, 0.9));
    r.set_rate(kSrvDiffHost, uni(rng, 0.0, 0.3));
    r.set_int(kDstHostCount, 255);
    r.set_int(kDstHostSrvCount, unii(rng, 1, 40));
    r.set_rate(kDstHostSameSrv, uni(rng, 0.0, 0.1));
    r.set_rate(kDstHostDiffSrv, uni(rng, 0.02, 0.9));
    r.set_rate(kDstHostSameSrcPort, uni(rng, 0.0, 1.0));
    r.set_rate(kDstHostSerror, uni(rng, 0.7, 1.0));
    r.set_rate(kDstHostSrvSerror, uni(rng, 0.7, 1.0));
    return r;
}

// ICMP echo flood with spoofed broadcast replies.
Row smurf_record(Rng& rng) {
    Row r;
    r.label = "smurf";
    r.set_str(kProtocol, "icmp");
    r.set_str(kService, "ecr_i");
    r.set_str(kFlag, "SF");

    static const long sizes[] = {508, 520, 1032, 1480};
    r.set_int(kSrcBytes, sizes[unii(rng, 0, 3)] * unii(rng, 1, 3));
    const long count = unii(rng, 150, 511);
    r.set_int(kCount, count);
    r.set_int(kSrvCount, count);
    r.set_rate(kSameSrv, 1.0);
    r.set_int(kDstHostCount, 255);
    r.set_int(kDstHostSrvCount, 255);
    r.set_rate(kDstHostSameSrv, 1.0);
    r.set_rate(kDstHostSameSrcPort, uni(rng, 0.5, 1.0));
    return r;
}

// Port scan: many services, mostly rejected, tiny payloads.
Row portsweep_record(Rng& rng) {
    Row r;
    r.label = "portsweep";
    r.set_str(kProtocol, "tcp");
    static const char* services[] = {"telnet", "ftp",    "finger", "pop_3",
                                     "imap4",  "sunrpc", "uucp",   "courier",
                                     "whois",  "netstat", "ssh",   "mtp"};
    r.set_str(kService, services[unii(rng, 0, 11)]);
    const double u = uni(rng, 0.0, 1.0);
    r.set_str(kFlag, u < 0.6 ? "REJ" : (u < 0.85 ? "RSTR" : "SF"));

    if (bern(rng, 0.2)) r.set_int(kDuration, unii(rng, 1, 60));
    r.set_int(kSrcBytes, unii(rng, 0, 60));
    if (bern(rng, 0.3)) r.set_int(kDstBytes, unii(rng, 40, 4000));
    r.set_int(kCount, unii(rng, 1, 8));
    r.set_int(kSrvCount, unii(rng, 1, 3));
    r.set_rate(kSerror, uni(rng, 0.0, 0.3));
    const double rerror = uni(rng, 0.5, 1.0);
    r.set_rate(kRerror, rerror);
    r.set_rate(kSrvRerror, rerror * uni(rng, 0.8, 1.0));
    r.set_rate(kSameSrv, uni(rng, 0.0, 0.3));
    r.set_rate(kDiffSrv, uni(rng, 0.4, 1.0));
    r.set_rate(kSrvDiffHost, uni(rng, 0.2, 0.9));
    r.set_int(kDstHostCount, unii(rng, 1, 255));
    r.set_int(kDstHostSrvCount, unii(rng, 1, 20));
    r.set_rate(kDstHostSameSrv, uni(rng, 0.0, 0.2));
    r.set_rate(kDstHostDiffSrv, uni(rng, 0.3, 1.0));
    r.set_rate(kDstHostSameSrcPort, uni(rng, 0.0, 1.0));
    r.set_rate(kDstHostRerror, uni(rng, 0.5, 1.0));
    r.set_rate(kDstHostSrvRerror, uni(rng, 0.5, 1.0));
    return r;
}

Row attack_record(Rng& rng, int kind) {
    switch (kind % 3) {
        case 0: return neptune_record(rng);
        case 1: return smurf_record(rng);
        default: return portsweep_record(rng);
    }
}

}  // namespace

SyntheticStream make_train(int n, std::uint64_t seed) {
    Rng rng(seed);
    SyntheticStream out;
    out.csv.reserve(size_t(n) * 200);
    for (int i = 0; i < n; ++i) {
        const bool attack = bern(rng, 0.45);
        Row r = attack ? attack_record(rng, int(unii(rng, 0, 2))) : normal_record(rng);
        out.csv += r.csv(-1);
        out.labels.push_back(attack ? 1 : 0);
    }
    return out;
}

SyntheticStream make_test(const BurstSpec& spec) {
    Rng rng(spec.seed);
    SyntheticStream out;

    auto emit_normal = [&](int count) {
        for (int i = 0; i < count; ++i) {
            const double phase =
                2.0 * M_PI * double(out.labels.size()) / double(spec.load_cycle_period);
            const double level = std::exp(spec.load_cycle_amplitude * std::sin(phase));
            Row r = bern(rng, spec.unseen_service_rate)
                        ? normal_record(rng, level, "http_8001")
                        : normal_record(rng, level);
            out.csv += r.csv(int(unii(rng, 15, 21)));
            out.labels.push_back(0);
        }
    };

    emit_normal(spec.lead_normal);
    for (int b = 0; b < spec.bursts; ++b) {
        for (int i = 0; i < spec.burst_len; ++i) {
            // bursts blend vectors; a window of one stereotyped flood would be
            // *less* dispersed than background, which is not the regime here
            Row r = attack_record(rng, int(unii(rng, 0, 2)));
            if (spec.novel_label && b == 1 && i < 25) r.label = "novel_probe";
            out.csv += r.csv(int(unii(rng, 15, 21)));
            out.labels.push_back(1);
        }
        emit_normal(spec.gap);
    }
    return out;
}

}  // namespace testsupport
