#pragma once

#include <vector>

#include "dassim/operators/dense.hpp"

namespace dassim {

// Dense autoencoder over flattened fields. The encoder ends in an identity
// layer producing the latent vector; the decoder mirrors it.
struct Autoencoder {
    DenseNetwork encoder;
    DenseNetwork decoder;

    // widths = {field_dim, ..., latent_dim}; the decoder uses the reverse.
    static Autoencoder random(const std::vector<std::size_t>& widths, Activation hidden, Rng& rng) {
        Autoencoder ae;
        ae.encoder = DenseNetwork::random(widths, hidden, Activation::identity, rng);
        std::vector<std::size_t> rev(widths.rbegin(), widths.rend());
        ae.decoder = DenseNetwork::random(rev, hidden, Activation::identity, rng);
        return ae;
    }

    std::size_t field_dim() const { return encoder.input_dim(); }
    std::size_t latent_dim() const { return encoder.output_dim(); }

    void check() const {
        encoder.check();
        decoder.check();
        detail::require_dims(encoder.output_dim() == decoder.input_dim(), "Autoencoder: latent widths differ");
        detail::require_dims(decoder.output_dim() == encoder.input_dim(), "Autoencoder: field widths differ");
    }

    std::vector<const Matrix*> parameters() const {
        auto p = encoder.parameters();
        auto d = decoder.parameters();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }
    std::vector<Matrix*> mutable_parameters() {
        auto p = encoder.mutable_parameters();
        auto d = decoder.mutable_parameters();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }

    // Reconstruction decoder(encoder(x)).
    Var record(Tape& tape, std::span<const Var> params, const Var& x) const {
        const std::size_t ne = encoder.layers.size() * 2;
        Var z = encoder.record(tape, params.subspan(0, ne), x);
        return decoder.record(tape, params.subspan(ne), z);
    }

    Matrix encode(const Matrix& fields) const {
        Tape t;
        return encoder.record(t, t.input(fields)).value();
    }
    Matrix decode(const Matrix& latents) const {
        Tape t;
        return decoder.record(t, t.input(latents)).value();
    }

    DifferentiableOperator encoder_operator() const { return dense_operator(encoder); }
    DifferentiableOperator decoder_operator() const { return dense_operator(decoder); }
};

}  // namespace dassim
