//! The two scoring models.
//!
//! The user-ranking model encodes a question with a multi-width
//! convolutional tower — embedding lookup, one convolution + ReLU + 1-max
//! pool per region size, concatenation, dropout, linear projection — and
//! scores users by cosine against their learned vectors. The answer-ranking
//! baseline reuses the *same* tower (siamese weights) to encode answer
//! texts and scores (question, answer) pairs by cosine.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{
    conv_text, conv_text_backward, cosine, dropout_apply, dropout_backward, linear,
    linear_backward, max_pool_columns, relu, relu_backward, Mode, Tensor,
};

/// Convolution bank: one group of `filters_per_size` filters per region
/// size, applied side by side and pooled into one merged vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub region_sizes: Vec<usize>,
    pub filters_per_size: usize,
}

impl ConvSpec {
    /// Full-size bank: 500 filters for each of the sizes 2–5.
    pub fn full() -> Self {
        Self {
            region_sizes: vec![2, 3, 4, 5],
            filters_per_size: 500,
        }
    }

    /// Desk-sized bank for fast experiments: 100 filters per size.
    pub fn desk() -> Self {
        Self {
            region_sizes: vec![2, 3, 4, 5],
            filters_per_size: 100,
        }
    }

    /// Width of the merged pooled vector.
    pub fn total_filters(&self) -> usize {
        self.region_sizes.len() * self.filters_per_size
    }

    fn validate(&self, seq_len: usize) -> Result<()> {
        if self.region_sizes.is_empty() || self.filters_per_size == 0 {
            return Err(Error::InvalidConfig(
                "need at least one region size and one filter".into(),
            ));
        }
        if let Some(&m) = self.region_sizes.iter().find(|&&m| m < 1 || m > seq_len) {
            return Err(Error::InvalidConfig(format!(
                "region size {m} outside [1, {seq_len}]"
            )));
        }
        Ok(())
    }
}

/// Everything trainable, plus the lookup keys: word vectors, user vectors,
/// the convolution bank, and the projection onto user space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv: ConvSpec,
    pub seq_len: usize,
    pub dropout_rate: f64,
    /// When false (the default) user vectors stay frozen at their
    /// walk-trained values; when true they fine-tune with everything else.
    pub train_user_table: bool,
    word_keys: Vec<String>,
    user_keys: Vec<String>,
    user_index: HashMap<String, usize>,
    /// `[vocab, word_dim]`; row ids follow the vocabulary.
    pub word_emb: Tensor,
    /// `[users, user_dim]`.
    pub user_emb: Tensor,
    /// Per region size: `[filters_per_size, m, word_dim]`.
    pub filters: Vec<Tensor>,
    /// Per region size: `[filters_per_size]`.
    pub conv_bias: Vec<Tensor>,
    /// `[total_filters, user_dim]`.
    pub projection: Tensor,
    /// `[user_dim]`.
    pub proj_bias: Tensor,
}

/// The encoded question: a vector in user space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEncoding {
    pub vector: Vec<f64>,
}

/// Every intermediate the backward pass needs for one forward call.
pub struct ForwardTrace {
    ids: Vec<usize>,
    embedded: Tensor,
    /// Pre-activation conv output per region size.
    conv_pre: Vec<Tensor>,
    /// Row index of each filter's maximum, per region size.
    argmax: Vec<Vec<usize>>,
    dropout_mask: Option<Vec<bool>>,
    /// Pooled vector after dropout — the projection input.
    dropped: Vec<f64>,
    pub output: Vec<f64>,
}

impl ModelParams {
    /// Assemble a model around existing word and user tables. Convolution
    /// filters and the projection start at scaled-uniform values
    /// (`sqrt(6 / (fan_in + fan_out))`); biases start at zero.
    pub fn init<R: Rng>(
        conv: ConvSpec,
        seq_len: usize,
        dropout_rate: f64,
        train_user_table: bool,
        word_table: &EmbeddingTable,
        user_table: &EmbeddingTable,
        rng: &mut R,
    ) -> Result<Self> {
        conv.validate(seq_len)?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        if word_table.is_empty() || user_table.len() == 0 {
            return Err(Error::EmptyInput(
                "word and user tables must be non-empty".into(),
            ));
        }
        let word_dim = word_table.dim();
        let user_dim = user_table.dim();
        let f = conv.filters_per_size;

        let mut filters = Vec::with_capacity(conv.region_sizes.len());
        let mut conv_bias = Vec::with_capacity(conv.region_sizes.len());
        for &m in &conv.region_sizes {
            let bound = (6.0 / (m * word_dim + f) as f64).sqrt();
            filters.push(Tensor::uniform(vec![f, m, word_dim], bound, rng));
            conv_bias.push(Tensor::zeros(vec![f]));
        }
        let total = conv.total_filters();
        let bound = (6.0 / (total + user_dim) as f64).sqrt();
        let projection = Tensor::uniform(vec![total, user_dim], bound, rng);
        let proj_bias = Tensor::zeros(vec![user_dim]);

        let word_emb = Tensor::new(
            vec![word_table.len(), word_dim],
            word_table.data().to_vec(),
        )?;
        let user_emb = Tensor::new(
            vec![user_table.len(), user_dim],
            user_table.data().to_vec(),
        )?;
        let user_keys = user_table.keys().to_vec();
        let user_index = user_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();

        Ok(Self {
            conv,
            seq_len,
            dropout_rate,
            train_user_table,
            word_keys: word_table.keys().to_vec(),
            user_keys,
            user_index,
            word_emb,
            user_emb,
            filters,
            conv_bias,
            projection,
            proj_bias,
        })
    }

    /// Reassemble a model from stored tensors (checkpoint loading).
    /// Validates that every tensor has the shape the config implies.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        conv: ConvSpec,
        seq_len: usize,
        dropout_rate: f64,
        train_user_table: bool,
        word_keys: Vec<String>,
        user_keys: Vec<String>,
        word_emb: Tensor,
        user_emb: Tensor,
        filters: Vec<Tensor>,
        conv_bias: Vec<Tensor>,
        projection: Tensor,
        proj_bias: Tensor,
    ) -> Result<Self> {
        conv.validate(seq_len)?;
        let check = |tensor: &Tensor, expected: Vec<usize>, context: &str| -> Result<()> {
            if tensor.shape() != expected.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected,
                    got: tensor.shape().to_vec(),
                    context: context.to_string(),
                });
            }
            Ok(())
        };
        if word_emb.shape().len() != 2 || user_emb.shape().len() != 2 {
            return Err(Error::InvalidConfig(
                "embedding tensors must be 2-dimensional".into(),
            ));
        }
        let word_dim = word_emb.shape()[1];
        let user_dim = user_emb.shape()[1];
        check(&word_emb, vec![word_keys.len(), word_dim], "word embeddings")?;
        check(&user_emb, vec![user_keys.len(), user_dim], "user embeddings")?;
        if filters.len() != conv.region_sizes.len() || conv_bias.len() != conv.region_sizes.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} filter banks, got {} (+ {} bias banks)",
                conv.region_sizes.len(),
                filters.len(),
                conv_bias.len()
            )));
        }
        for (i, &m) in conv.region_sizes.iter().enumerate() {
            check(
                &filters[i],
                vec![conv.filters_per_size, m, word_dim],
                "conv filters",
            )?;
            check(&conv_bias[i], vec![conv.filters_per_size], "conv bias")?;
        }
        check(
            &projection,
            vec![conv.total_filters(), user_dim],
            "projection",
        )?;
        check(&proj_bias, vec![user_dim], "projection bias")?;
        let user_index = user_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Ok(Self {
            conv,
            seq_len,
            dropout_rate,
            train_user_table,
            word_keys,
            user_keys,
            user_index,
            word_emb,
            user_emb,
            filters,
            conv_bias,
            projection,
            proj_bias,
        })
    }

    pub fn word_dim(&self) -> usize {
        self.word_emb.shape()[1]
    }

    /// Output dimension of the tower — always the user-vector dimension.
    pub fn user_dim(&self) -> usize {
        self.user_emb.shape()[1]
    }

    pub fn vocab_len(&self) -> usize {
        self.word_emb.shape()[0]
    }

    pub fn word_keys(&self) -> &[String] {
        &self.word_keys
    }

    pub fn user_keys(&self) -> &[String] {
        &self.user_keys
    }

    pub fn user_id(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    /// A user's vector, by name.
    pub fn user_vector(&self, user: &str) -> Result<&[f64]> {
        let id = self
            .user_id(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        Ok(self.user_emb.row(id))
    }

    /// Export the user vectors as a keyed table (e.g. for `save_vectors`).
    pub fn user_table(&self) -> EmbeddingTable {
        let mut t = EmbeddingTable::from_rows(
            self.user_keys.clone(),
            self.user_dim(),
            self.user_emb.data().to_vec(),
        )
        .expect("keys were validated at construction");
        t.trainable = self.train_user_table;
        t
    }

    /// Export the word vectors as a keyed table.
    pub fn word_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_rows(
            self.word_keys.clone(),
            self.word_dim(),
            self.word_emb.data().to_vec(),
        )
        .expect("keys were validated at construction")
    }

    /// The tensors an optimizer should update, in a fixed order. The user
    /// table participates only when fine-tuning is enabled.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.push(&mut self.word_emb);
        if self.train_user_table {
            out.push(&mut self.user_emb);
        }
        for t in &mut self.filters {
            out.push(t);
        }
        for t in &mut self.conv_bias {
            out.push(t);
        }
        out.push(&mut self.projection);
        out.push(&mut self.proj_bias);
        out
    }

    /// Zero every gradient buffer (allocating on first use).
    pub fn zero_grads(&mut self) {
        for t in self.trainable_tensors_mut() {
            t.alloc_grad();
        }
        // the user table still receives gradients from the loss even when
        // frozen; keep its buffer clean so grad checks see a fresh slate
        self.user_emb.alloc_grad();
    }
}

/// Run the tower over an encoded (length `seq_len`) id sequence,
/// returning every intermediate. `rng` is consumed only by train-mode
/// dropout; eval mode is a pure function of the inputs.
pub fn forward_trace<R: Rng>(
    ids: &[usize],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace> {
    if ids.len() != params.seq_len {
        return Err(Error::ShapeMismatch {
            expected: vec![params.seq_len],
            got: vec![ids.len()],
            context: "token id sequence".into(),
        });
    }
    let word_dim = params.word_dim();
    let vocab = params.vocab_len();
    let mut embedded = Vec::with_capacity(ids.len() * word_dim);
    for &id in ids {
        if id >= vocab {
            return Err(Error::IdOutOfRange { id, size: vocab });
        }
        embedded.extend_from_slice(params.word_emb.row(id));
    }
    let embedded = Tensor::new(vec![ids.len(), word_dim], embedded)?;

    let mut pooled = Vec::with_capacity(params.conv.total_filters());
    let mut conv_pre = Vec::with_capacity(params.conv.region_sizes.len());
    let mut argmax = Vec::with_capacity(params.conv.region_sizes.len());
    for (s, _) in params.conv.region_sizes.iter().enumerate() {
        let pre = conv_text(&embedded, &params.filters[s], &params.conv_bias[s])?;
        let activated = relu(&pre);
        let (pool, arg) = max_pool_columns(&activated);
        pooled.extend_from_slice(&pool);
        conv_pre.push(pre);
        argmax.push(arg);
    }

    let (dropped, dropout_mask) = dropout_apply(&pooled, params.dropout_rate, mode, rng)?;
    let output = linear(&dropped, &params.projection, params.proj_bias.data())?;

    Ok(ForwardTrace {
        ids: ids.to_vec(),
        embedded,
        conv_pre,
        argmax,
        dropout_mask,
        dropped,
        output,
    })
}

/// Encode a question. See [`forward_trace`] for the pipeline.
pub fn question_forward<R: Rng>(
    ids: &[usize],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<QuestionEncoding> {
    Ok(QuestionEncoding {
        vector: forward_trace(ids, params, mode, rng)?.output,
    })
}

/// Encode an answer text. The answer-ranking baseline is siamese: this is
/// the identical tower with the identical weights.
pub fn answer_forward<R: Rng>(
    ids: &[usize],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<QuestionEncoding> {
    question_forward(ids, params, mode, rng)
}

/// Deterministic eval-mode encoding (no dropout, no randomness).
pub fn encode_eval(ids: &[usize], params: &ModelParams) -> Result<QuestionEncoding> {
    // eval mode never samples; any rng satisfies the signature
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    question_forward(ids, params, Mode::Eval, &mut rng)
}

use rand::SeedableRng;

/// Cosine between the eval-mode question encoding and a user's vector.
pub fn score(q_ids: &[usize], user: &str, params: &ModelParams) -> Result<f64> {
    let encoding = encode_eval(q_ids, params)?;
    cosine(&encoding.vector, params.user_vector(user)?)
}

/// Push the output gradient of one forward call back through the tower,
/// accumulating into every parameter's gradient buffer (allocated on
/// demand). Word-embedding gradients land on the rows the ids touched;
/// repeated ids accumulate.
pub fn backward(trace: &ForwardTrace, params: &mut ModelParams, g_output: &[f64]) -> Result<()> {
    if g_output.len() != params.user_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.user_dim()],
            got: vec![g_output.len()],
            context: "output gradient".into(),
        });
    }
    // projection
    let (g_dropped, g_proj, g_proj_bias) =
        linear_backward(&trace.dropped, &params.projection, g_output);
    params.projection.accumulate_grad(&g_proj);
    params.proj_bias.accumulate_grad(&g_proj_bias);

    // dropout
    let g_pooled = dropout_backward(
        &g_dropped,
        params.dropout_rate,
        trace.dropout_mask.as_deref(),
    );

    // per region size: un-pool to the argmax row, un-ReLU, un-conv
    let word_dim = params.word_dim();
    let mut g_embedded = vec![0.0; trace.embedded.numel()];
    let f = params.conv.filters_per_size;
    for (s, _) in params.conv.region_sizes.iter().enumerate() {
        let pre = &trace.conv_pre[s];
        let height = pre.shape()[0];
        let mut g_act = vec![0.0; pre.numel()];
        for j in 0..f {
            let g = g_pooled[s * f + j];
            if g != 0.0 {
                g_act[trace.argmax[s][j] * f + j] = g;
            }
        }
        let g_pre = relu_backward(pre, &g_act);
        let g_pre = Tensor::new(vec![height, f], g_pre)?;
        let (dx, dw, db) = conv_text_backward(&trace.embedded, &params.filters[s], &g_pre);
        params.filters[s].accumulate_grad(&dw);
        params.conv_bias[s].accumulate_grad(&db);
        for (gi, di) in g_embedded.iter_mut().zip(&dx) {
            *gi += di;
        }
    }

    // scatter token gradients into the word table rows
    if params.word_emb.grad().is_none() {
        params.word_emb.alloc_grad();
    }
    let grad = params.word_emb.grad_mut().expect("just allocated");
    for (pos, &id) in trace.ids.iter().enumerate() {
        let src = &g_embedded[pos * word_dim..(pos + 1) * word_dim];
        let dst = &mut grad[id * word_dim..(id + 1) * word_dim];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    Ok(())
}
