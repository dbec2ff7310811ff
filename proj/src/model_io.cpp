#include "sentinel/model_io.hpp"

#include <fstream>
#include <sstream>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

using Json = nlohmann::ordered_json;

Json vector_to_json(const Eigen::VectorXd& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

[[noreturn]] void fail(const std::string& what) { throw SchemaError(what); }

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key))
        fail(std::string("model file lacks field '") + key + "'");
    return j.at(key);
}

double number_field(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_number()) fail(std::string("field '") + key + "' is not a number");
    return v.get<double>();
}

Eigen::VectorXd vector_field(const Json& j, const char* key) {
    const Json& arr = field(j, key);
    if (!arr.is_array()) fail(std::string("field '") + key + "' is not an array");
    Eigen::VectorXd v(arr.size());
    Eigen::Index i = 0;
    for (const auto& x : arr) {
        if (!x.is_number()) fail(std::string("field '") + key + "' has a non-number entry");
        v[i++] = x.get<double>();
    }
    return v;
}

// rows must agree in length; [] is a 0 x fallback_cols matrix
Eigen::MatrixXd matrix_field(const Json& j, const char* key, Eigen::Index fallback_cols) {
    const Json& rows = field(j, key);
    if (!rows.is_array()) fail(std::string("field '") + key + "' is not an array");
    if (rows.empty()) return Eigen::MatrixXd(0, fallback_cols);
    if (!rows.front().is_array())
        fail(std::string("field '") + key + "' is not an array of rows");
    const Eigen::Index cols = Eigen::Index(rows.front().size());
    Eigen::MatrixXd m(Eigen::Index(rows.size()), cols);
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        if (!row.is_array() || Eigen::Index(row.size()) != cols)
            fail(std::string("field '") + key + "' has ragged rows");
        Eigen::Index c = 0;
        for (const auto& x : row) {
            if (!x.is_number())
                fail(std::string("field '") + key + "' has a non-number entry");
            m(r, c++) = x.get<double>();
        }
        ++r;
    }
    return m;
}

}  // namespace

nlohmann::ordered_json pipeline_to_json(const PipelineModel& model) {
    Json j;
    j["schema_version"] = kModelSchemaVersion;

    Json enc;
    Json vocabs = Json::array();
    for (const auto& v : model.encoder.vocab()) vocabs.push_back(v);
    enc["vocabularies"] = std::move(vocabs);
    enc["means"] = vector_to_json(model.encoder.means());
    enc["stds"] = vector_to_json(model.encoder.stds());
    j["encoder"] = std::move(enc);

    Json pca;
    pca["components"] = matrix_to_json(model.pca.components);
    pca["explained_variance"] = vector_to_json(model.pca.explained_variance);
    pca["center"] = vector_to_json(model.pca.center);
    j["pca"] = std::move(pca);

    Json safe;
    safe["mean"] = vector_to_json(model.safe.gaussian.mean());
    safe["covariance"] = matrix_to_json(model.safe.gaussian.covariance());
    safe["kde_bandwidth"] = model.safe.kde_bandwidth;
    safe["kde_points"] = matrix_to_json(model.safe.kde_points);
    j["safe"] = std::move(safe);
    return j;
}

PipelineModel pipeline_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) fail("model file is not a json object");
    const Json& ver = field(j, "schema_version");
    if (!ver.is_number_integer()) fail("schema_version is not an integer");
    if (ver.get<int>() != kModelSchemaVersion) {
        std::ostringstream msg;
        msg << "schema_version " << ver.get<int>() << " is not the supported "
            << kModelSchemaVersion;
        fail(msg.str());
    }

    const Json& enc = field(j, "encoder");
    const Json& vocabs = field(enc, "vocabularies");
    if (!vocabs.is_array() || vocabs.size() != kCategoricalColumns.size())
        fail("encoder.vocabularies must hold one list per categorical column");
    std::array<std::vector<std::string>, 3> vocab;
    for (size_t i = 0; i < vocab.size(); ++i) {
        const Json& arr = vocabs.at(i);
        if (!arr.is_array()) fail("encoder vocabulary is not an array");
        for (const auto& s : arr) {
            if (!s.is_string()) fail("encoder vocabulary entry is not a string");
            vocab[i].push_back(s.get<std::string>());
        }
    }
    Eigen::VectorXd means = vector_field(enc, "means");
    Eigen::VectorXd stds = vector_field(enc, "stds");
    if (means.size() != stds.size()) fail("encoder means and stds differ in length");
    long expanded = kNumNumeric;
    for (const auto& v : vocab) expanded += long(v.size());
    if (means.size() != expanded)
        fail("encoder width does not match its vocabularies");
    EncoderModel encoder =
        EncoderModel::from_parts(std::move(vocab), std::move(means), std::move(stds));

    const Json& pj = field(j, "pca");
    PcaModel pca;
    pca.center = vector_field(pj, "center");
    pca.components = matrix_field(pj, "components", pca.center.size());
    pca.explained_variance = vector_field(pj, "explained_variance");
    if (pca.center.size() != encoder.dim())
        fail("pca center does not match the encoder width");
    if (pca.components.cols() != pca.center.size())
        fail("pca components do not match the center length");
    if (pca.explained_variance.size() != pca.components.rows())
        fail("pca explained_variance does not match the component count");
    if (pca.components.rows() < 1) fail("pca holds no components");

    const Json& sj = field(j, "safe");
    Eigen::VectorXd mean = vector_field(sj, "mean");
    if (mean.size() != pca.components.rows())
        fail("safe mean does not match the projected dimension");
    Eigen::MatrixXd cov = matrix_field(sj, "covariance", mean.size());
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        fail("safe covariance shape does not match its mean");
    const double bandwidth = number_field(sj, "kde_bandwidth");
    if (!(bandwidth > 0)) fail("kde_bandwidth must be positive");
    Eigen::MatrixXd kde = matrix_field(sj, "kde_points", mean.size());
    if (kde.rows() > 0 && kde.cols() != mean.size())
        fail("kde_points width does not match the projected dimension");

    // SPD and symmetry are re-validated by construction here
    SafeModel safe{GaussianModel(std::move(mean), std::move(cov)), std::move(kde),
                   bandwidth};
    return PipelineModel{std::move(encoder), std::move(pca), std::move(safe)};
}

void save_pipeline(const std::string& path, const PipelineModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << pipeline_to_json(model).dump(2) << '\n';
    if (!out) throw Error("failed writing " + path);
}

PipelineModel load_pipeline(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model file is not valid json: ") + e.what());
    }
    return pipeline_from_json(j);
}

}  // namespace sentinel
