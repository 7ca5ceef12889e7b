use crate::Result;

/// Anything that maps an observation to an action.
///
/// `act` takes `&mut self` so stochastic policies can own their generator.
pub trait Policy {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        (**self).act(observation)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        (**self).act(observation)
    }
}
