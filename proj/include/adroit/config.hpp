#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adroit/errors.hpp"

namespace adroit {

// Flat key-value document: `key = value` lines, `#` comments, blank lines.
struct KeyValues {
    std::map<std::string, std::string> items;

    static KeyValues parse(const std::string& text) {
        KeyValues kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            auto trim = [](std::string s) {
                auto b = s.find_first_not_of(" \t\r");
                auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            std::string body = trim(line);
            if (body.empty()) continue;
            auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw config_error("config line " + std::to_string(lineno) +
                                   ": expected key = value");
            }
            std::string key = trim(body.substr(0, eq));
            std::string value = trim(body.substr(eq + 1));
            if (key.empty()) {
                throw config_error("config line " + std::to_string(lineno) + ": empty key");
            }
            if (kv.items.count(key)) {
                throw config_error("config: duplicate key '" + key + "'");
            }
            kv.items[key] = value;
        }
        return kv;
    }

    bool has(const std::string& k) const { return items.count(k) != 0; }

    const std::string& raw(const std::string& k) const { return items.at(k); }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (v.empty()) return out;
    std::istringstream in(v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        out.push_back(static_cast<int>(parse_int(key, tok)));
    }
    return out;
}

inline std::string int_list_string(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

} // namespace detail

// Every hyperparameter of the framework. Defaults are the CIFAR-10 settings:
// lambda = (1, 0.5, 0.5, 1), beta = 1, d = 32, VAE/discriminator lr 5e-4,
// target lr 1e-2 with momentum 0.9 and weight decay 0.005, 100 epochs,
// batch 128, initial pool and budget 1000. Desk-scale runs override via the
// config file.
struct ALConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double lambda3 = 0.5;
    double lambda4 = 1.0;
    double beta = 1.0;
    double xi = 1.0; // weight of the pretext term in target training

    double lr_vae = 5e-4;
    double lr_disc = 5e-4;
    double lr_target = 1e-2;
    double momentum = 0.9;
    double weight_decay = 0.005;

    int epochs_vae = 100;
    int epochs_target = 100;
    int batch_size = 128;
    int latent_dim = 32;

    int initial_pool = 1000;
    int budget = 1000;
    int rounds = 5;
    std::uint64_t seed = 1;

    bool proxy_kl = true;     // keep the KL terms inside the proxy losses
    double grad_clip = 0.0;   // 0 disables clipping
    bool warm_start = false;  // reuse VAE/discriminator weights across rounds
    double holdout_fraction = 0.2;

    // Architecture sizes (all widths are config-driven).
    std::vector<int> enc_channels{16, 32, 64}; // stride-2 conv stack
    int cls_hidden = 64;                       // proxy classifier hidden width
    int disc_hidden = 64;                      // 5-layer MLP width
    std::vector<int> target_channels{16, 32, 32, 64};

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw config_error(std::string("config: ") + what);
        };
        require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0,
                "lambda weights must be nonnegative");
        require(beta >= 0, "beta must be nonnegative");
        require(xi >= 0, "xi must be nonnegative");
        // zero is allowed so no-op training runs stay expressible in tests
        require(lr_vae >= 0 && lr_disc >= 0 && lr_target >= 0,
                "learning rates must be nonnegative");
        require(momentum >= 0 && weight_decay >= 0, "momentum/weight_decay must be nonnegative");
        require(epochs_vae > 0 && epochs_target > 0, "epoch counts must be positive");
        require(batch_size > 0, "batch_size must be positive");
        require(latent_dim > 0, "latent_dim must be positive");
        require(initial_pool > 0 && budget > 0 && rounds >= 0,
                "initial_pool/budget must be positive, rounds nonnegative");
        require(grad_clip >= 0, "grad_clip must be nonnegative");
        require(holdout_fraction >= 0 && holdout_fraction < 1,
                "holdout_fraction must be in [0,1)");
        require(!enc_channels.empty(), "enc_channels must be nonempty");
        require(target_channels.size() >= 1, "target_channels must be nonempty");
        require(cls_hidden > 0 && disc_hidden > 0, "hidden widths must be positive");
        for (int c : enc_channels) require(c > 0, "enc_channels entries must be positive");
        for (int c : target_channels) require(c > 0, "target_channels entries must be positive");
    }

    // Reads the keys it owns from kv and marks them consumed. Callers check
    // for unconsumed keys once every consumer has run; unknown keys are a
    // hard error at that point.
    void apply(const KeyValues& kv, std::set<std::string>& consumed) {
        auto take = [&](const char* key) -> const std::string* {
            auto it = kv.items.find(key);
            if (it == kv.items.end()) return nullptr;
            consumed.insert(key);
            return &it->second;
        };
        using namespace detail;
        if (auto* v = take("lambda1")) lambda1 = parse_double("lambda1", *v);
        if (auto* v = take("lambda2")) lambda2 = parse_double("lambda2", *v);
        if (auto* v = take("lambda3")) lambda3 = parse_double("lambda3", *v);
        if (auto* v = take("lambda4")) lambda4 = parse_double("lambda4", *v);
        if (auto* v = take("beta")) beta = parse_double("beta", *v);
        if (auto* v = take("xi")) xi = parse_double("xi", *v);
        if (auto* v = take("lr_vae")) lr_vae = parse_double("lr_vae", *v);
        if (auto* v = take("lr_disc")) lr_disc = parse_double("lr_disc", *v);
        if (auto* v = take("lr_target")) lr_target = parse_double("lr_target", *v);
        if (auto* v = take("momentum")) momentum = parse_double("momentum", *v);
        if (auto* v = take("weight_decay")) weight_decay = parse_double("weight_decay", *v);
        if (auto* v = take("epochs_vae")) epochs_vae = static_cast<int>(parse_int("epochs_vae", *v));
        if (auto* v = take("epochs_target")) epochs_target = static_cast<int>(parse_int("epochs_target", *v));
        if (auto* v = take("batch_size")) batch_size = static_cast<int>(parse_int("batch_size", *v));
        if (auto* v = take("latent_dim")) latent_dim = static_cast<int>(parse_int("latent_dim", *v));
        if (auto* v = take("initial_pool")) initial_pool = static_cast<int>(parse_int("initial_pool", *v));
        if (auto* v = take("budget")) budget = static_cast<int>(parse_int("budget", *v));
        if (auto* v = take("rounds")) rounds = static_cast<int>(parse_int("rounds", *v));
        if (auto* v = take("seed")) seed = parse_u64("seed", *v);
        if (auto* v = take("proxy_kl")) proxy_kl = parse_bool("proxy_kl", *v);
        if (auto* v = take("grad_clip")) grad_clip = parse_double("grad_clip", *v);
        if (auto* v = take("warm_start")) warm_start = parse_bool("warm_start", *v);
        if (auto* v = take("holdout_fraction")) holdout_fraction = parse_double("holdout_fraction", *v);
        if (auto* v = take("enc_channels")) enc_channels = parse_int_list("enc_channels", *v);
        if (auto* v = take("cls_hidden")) cls_hidden = static_cast<int>(parse_int("cls_hidden", *v));
        if (auto* v = take("disc_hidden")) disc_hidden = static_cast<int>(parse_int("disc_hidden", *v));
        if (auto* v = take("target_channels")) target_channels = parse_int_list("target_channels", *v);
        validate();
    }

    // Full key set in sorted order; used for the config snapshot.
    std::map<std::string, std::string> to_kv() const {
        std::map<std::string, std::string> m;
        auto num = [](double x) {
            std::ostringstream os;
            os.precision(17);
            os << x;
            return os.str();
        };
        m["lambda1"] = num(lambda1);
        m["lambda2"] = num(lambda2);
        m["lambda3"] = num(lambda3);
        m["lambda4"] = num(lambda4);
        m["beta"] = num(beta);
        m["xi"] = num(xi);
        m["lr_vae"] = num(lr_vae);
        m["lr_disc"] = num(lr_disc);
        m["lr_target"] = num(lr_target);
        m["momentum"] = num(momentum);
        m["weight_decay"] = num(weight_decay);
        m["epochs_vae"] = std::to_string(epochs_vae);
        m["epochs_target"] = std::to_string(epochs_target);
        m["batch_size"] = std::to_string(batch_size);
        m["latent_dim"] = std::to_string(latent_dim);
        m["initial_pool"] = std::to_string(initial_pool);
        m["budget"] = std::to_string(budget);
        m["rounds"] = std::to_string(rounds);
        m["seed"] = std::to_string(seed);
        m["proxy_kl"] = proxy_kl ? "true" : "false";
        m["grad_clip"] = num(grad_clip);
        m["warm_start"] = warm_start ? "true" : "false";
        m["holdout_fraction"] = num(holdout_fraction);
        m["enc_channels"] = detail::int_list_string(enc_channels);
        m["cls_hidden"] = std::to_string(cls_hidden);
        m["disc_hidden"] = std::to_string(disc_hidden);
        m["target_channels"] = detail::int_list_string(target_channels);
        return m;
    }
};

} // namespace adroit
