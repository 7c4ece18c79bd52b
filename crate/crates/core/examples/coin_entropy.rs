//! Conditional relative entropy of the Markov coin pair against its closed form.
use markov_dro::hypotest::{coin_entropy, coin_pair};
use markov_dro::markov::conditional_relative_entropy;

fn main() -> markov_dro::Result<()> {
    for k in 1..10 {
        let eps = k as f64 / 20.0;
        let pair = coin_pair(eps)?;
        let numeric = conditional_relative_entropy(pair.second(), pair.first())?;
        println!("eps={eps:.2}  numeric={numeric:.12}  closed form={:.12}", coin_entropy(eps));
    }
    Ok(())
}
